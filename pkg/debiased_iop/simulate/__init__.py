"""Simulation designs with known truths and the Monte Carlo harness that scores estimators on them."""

from __future__ import annotations as _annotations

from .dgp import (
    LINEAR_GAUSSIAN_COV,
    SATURATED_LEVELS,
    TRUTH_KEYS,
    DgpKind,
    DgpSpec,
    Sample,
    draw,
    gen_bernoulli_labels,
    gen_linear_gaussian,
    gen_randomized_treatment,
    gen_saturated,
    indicator_truth,
    saturated_coefficients,
    true_gini_saturated,
    true_varfv_saturated,
)
from .harness import (
    EstimatorKind,
    McConfig,
    McReport,
    McReportTypeAdapter,
    RepOutcome,
    default_mc_learner,
    grid_records,
    run_grid,
    run_mc,
    run_rep,
    write_grid,
)

__all__ = (
    'LINEAR_GAUSSIAN_COV',
    'SATURATED_LEVELS',
    'TRUTH_KEYS',
    'DgpKind',
    'DgpSpec',
    'Sample',
    'draw',
    'gen_bernoulli_labels',
    'gen_linear_gaussian',
    'gen_randomized_treatment',
    'gen_saturated',
    'indicator_truth',
    'saturated_coefficients',
    'true_gini_saturated',
    'true_varfv_saturated',
    'EstimatorKind',
    'McConfig',
    'McReport',
    'McReportTypeAdapter',
    'RepOutcome',
    'default_mc_learner',
    'grid_records',
    'run_grid',
    'run_mc',
    'run_rep',
    'write_grid',
)
