"""Monte Carlo replication harness: bias and coverage of an estimator on a DGP with a known truth."""

from __future__ import annotations as _annotations

import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal, Union

import logfire_api
import numpy as np
from joblib import Parallel, delayed
from pydantic import TypeAdapter

from .._utils import derive_seed
from ..crossfit import make_folds
from ..estimators import (
    ContrastName,
    contrast_te_debiased,
    contrast_te_plugin,
    iop_gini_debiased_np,
    iop_gini_plugin,
    ranking_risk_debiased,
    ranking_risk_plugin,
    varfv_debiased,
    varfv_plugin,
)
from ..exceptions import (
    ConfigurationError,
    DataError,
    DegenerateKernelWarning,
    InvalidInferenceWarning,
    NumericalError,
    SimulationError,
)
from ..format_as_table import format_records, records_to_csv
from ..learners import KnownLearnerName, LearnerSpec
from ..result import SCHEMA_VERSION, EstimateResult, Estimand
from ..settings import DEFAULT_FOLDS, DEFAULT_SEED, EstimatorSettings
from .dgp import TRUTH_KEYS, DgpSpec, draw

__all__ = (
    'EstimatorKind',
    'McConfig',
    'RepOutcome',
    'McReport',
    'McReportTypeAdapter',
    'default_mc_learner',
    'run_rep',
    'run_mc',
    'run_grid',
    'grid_records',
    'write_grid',
)

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')

EstimatorKind = Literal['plugin', 'debiased']


@dataclass(frozen=True)
class McConfig:
    """One Monte Carlo cell: a DGP, a sample size and an estimator."""

    dgp: DgpSpec
    n: int
    reps: int = 200
    estimator: EstimatorKind = 'debiased'
    learner: Union[LearnerSpec, KnownLearnerName] = 'lasso'
    """A name is expanded by [`default_mc_learner`][debiased_iop.simulate.harness.default_mc_learner]."""
    estimand: Estimand = 'iop'
    K: int = DEFAULT_FOLDS
    level: float = 0.95
    seed: int = DEFAULT_SEED
    contrast: ContrastName = 'difference'

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ConfigurationError(f'reps must be at least 1, got {self.reps}')
        if self.n < 10:
            raise ConfigurationError(f'n must be at least 10, got {self.n}')
        if self.estimator not in ('plugin', 'debiased'):
            raise ConfigurationError(f'Unknown estimator: {self.estimator!r}')
        if self.estimator == 'debiased' and self.K < 3:
            raise ConfigurationError(f'Debiased estimators need K >= 3, got {self.K}')
        if not 0.0 < self.level < 1.0:
            raise ConfigurationError(f'level must lie in (0, 1), got {self.level}')
        if self.estimand not in ('iop', 'varfv', 'ranking', 'contrast'):
            raise ConfigurationError(f'Unknown estimand: {self.estimand!r}')
        if self.truth_key not in TRUTH_KEYS[self.dgp.kind]:
            raise ConfigurationError(f'DGP {self.dgp.kind!r} has no known {self.truth_key} value')

    @property
    def truth_key(self) -> str:
        return f'contrast:{self.contrast}' if self.estimand == 'contrast' else self.estimand

    def learner_spec(self) -> LearnerSpec:
        if isinstance(self.learner, LearnerSpec):
            return self.learner
        return default_mc_learner(self.learner, self.dgp)


def default_mc_learner(name: KnownLearnerName, dgp: DgpSpec) -> LearnerSpec:
    """The learner used in simulations when only a name is given.

    On the saturated design, learners fit `ln Y` and exponentiate, and penalized linear models use the full
    dictionary of dummies with interactions up to order 3.
    """
    kind = 'random_forest' if name == 'rf' else name
    if kind not in ('ridge', 'lasso', 'random_forest', 'mean'):
        raise ConfigurationError(f'Unknown learner: {name}')
    if dgp.kind == 'saturated_categorical':
        order = 3 if kind in ('ridge', 'lasso') else 1
        return LearnerSpec(kind=kind, transform='log_exp', interaction_order=order)  # pyright: ignore[reportArgumentType]
    return LearnerSpec(kind=kind)  # pyright: ignore[reportArgumentType]


@dataclass
class RepOutcome:
    rep: int
    theta_true: float
    theta: float | None = None
    se: float | None = None
    covered: bool | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _estimate(config: McConfig, spec: LearnerSpec, data: Any, seed: int) -> EstimateResult:
    settings: EstimatorSettings = {'level': config.level}
    if config.estimator == 'plugin':
        if config.estimand == 'iop':
            return iop_gini_plugin(data, spec, settings=settings)
        if config.estimand == 'varfv':
            return varfv_plugin(data, spec, settings=settings)
        if config.estimand == 'ranking':
            return ranking_risk_plugin(data, spec, settings=settings)
        return contrast_te_plugin(data, config.contrast, spec, settings=settings)

    folds = make_folds(data.n, config.K, seed)
    if config.estimand == 'iop':
        return iop_gini_debiased_np(data, spec, folds, settings=settings)
    if config.estimand == 'varfv':
        return varfv_debiased(data, spec, folds, settings=settings)
    if config.estimand == 'ranking':
        return ranking_risk_debiased(data, spec, folds, settings=settings)
    return contrast_te_debiased(data, config.contrast, spec, folds, settings=settings)


def run_rep(config: McConfig, rep: int) -> RepOutcome:
    """Run replication `rep` (0-based). Data and folds use seeds derived from `(config.seed, rep)`.

    A `NumericalError` or `DataError` from the estimator marks the replication as failed instead of raising.
    """
    data_seed = derive_seed(config.seed, rep, 0)
    fold_seed = derive_seed(config.seed, rep, 1)
    spec = config.learner_spec()
    sample = draw(config.dgp, config.n, data_seed)
    theta_true = sample.truth[config.truth_key]
    with _logfire.span('replication {rep}', rep=rep, n=config.n):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', InvalidInferenceWarning)
                warnings.simplefilter('ignore', DegenerateKernelWarning)
                result = _estimate(config, spec, sample.data, fold_seed)
        except (NumericalError, DataError) as error:
            _logfire.warn('replication {rep} failed: {error}', rep=rep, error=str(error))
            return RepOutcome(rep=rep, theta_true=theta_true, error=str(error))
    return RepOutcome(
        rep=rep, theta_true=theta_true, theta=result.theta, se=result.se, covered=result.covers(theta_true)
    )


@dataclass
class McReport:
    """Summary of one Monte Carlo cell."""

    dgp: str
    sigma: float
    n: int
    reps: int
    estimator: EstimatorKind
    learner: str
    estimand: Estimand
    theta_true: float
    """Mean of the per-replication truths (constant except for `linear_gaussian`)."""
    mean_estimate: float
    bias: float
    """`mean(θ̂ - θ_true)` over successful replications."""
    coverage: float
    sd_estimates: float
    mean_se: float
    mc_se: float
    """Monte Carlo standard error of the bias, `sd_estimates / √successes`."""
    reps_failed: int
    level: float = 0.95
    schema_version: int = SCHEMA_VERSION
    failures: list[str] = field(default_factory=list)

    @property
    def successes(self) -> int:
        return self.reps - self.reps_failed

    def record(self) -> dict[str, Any]:
        return {
            'schema_version': self.schema_version,
            'dgp': self.dgp,
            'sigma': self.sigma,
            'estimand': self.estimand,
            'learner': self.learner,
            'estimator': self.estimator,
            'n': self.n,
            'reps': self.reps,
            'reps_failed': self.reps_failed,
            'theta_true': self.theta_true,
            'mean_estimate': self.mean_estimate,
            'bias': self.bias,
            'coverage': self.coverage,
            'sd_estimates': self.sd_estimates,
            'mean_se': self.mean_se,
            'mc_se': self.mc_se,
        }


McReportTypeAdapter = TypeAdapter(McReport)


def _summarize(config: McConfig, outcomes: Sequence[RepOutcome]) -> McReport:
    ok = [outcome for outcome in outcomes if not outcome.failed]
    failures = [f'rep {outcome.rep}: {outcome.error}' for outcome in outcomes if outcome.failed]
    if not ok:
        raise SimulationError(f'All {config.reps} replications failed; first error: {outcomes[0].error}')
    estimates = np.array([outcome.theta for outcome in ok], dtype=np.float64)
    truths = np.array([outcome.theta_true for outcome in ok], dtype=np.float64)
    errors = estimates - truths
    sd = float(np.std(errors, ddof=1)) if len(ok) > 1 else 0.0
    return McReport(
        dgp=config.dgp.kind,
        sigma=config.dgp.sigma,
        n=config.n,
        reps=config.reps,
        estimator=config.estimator,
        learner=config.learner_spec().kind,
        estimand=config.estimand,
        theta_true=math.fsum(truths.tolist()) / len(ok),
        mean_estimate=math.fsum(estimates.tolist()) / len(ok),
        bias=math.fsum(errors.tolist()) / len(ok),
        coverage=sum(bool(outcome.covered) for outcome in ok) / len(ok),
        sd_estimates=sd,
        mean_se=math.fsum(float(outcome.se or 0.0) for outcome in ok) / len(ok),
        mc_se=sd / math.sqrt(len(ok)),
        reps_failed=len(failures),
        level=config.level,
        failures=failures,
    )


def run_mc(config: McConfig, *, n_jobs: int = 1) -> McReport:
    """Run every replication of a cell.

    Replications run in worker processes when `n_jobs > 1`; each owns its seeds, and the report folds the
    outcomes in replication order, so the result does not depend on `n_jobs`.

    Raises:
        SimulationError: Every replication failed.
    """
    with _logfire.span(
        'monte carlo {estimator} {estimand} n={n}',
        estimator=config.estimator,
        estimand=config.estimand,
        n=config.n,
        reps=config.reps,
        dgp=config.dgp.kind,
    ):
        if n_jobs > 1 and config.reps > 1:
            outcomes = Parallel(n_jobs=n_jobs)(delayed(run_rep)(config, rep) for rep in range(config.reps))
        else:
            outcomes = [run_rep(config, rep) for rep in range(config.reps)]
        report = _summarize(config, outcomes)
        if report.reps_failed:
            _logfire.warn('{failed} of {reps} replications failed', failed=report.reps_failed, reps=config.reps)
        _logfire.info('bias {bias}, coverage {coverage}', bias=report.bias, coverage=report.coverage)
    return report


def run_grid(
    base: McConfig,
    ns: Sequence[int],
    learners: Sequence[Union[LearnerSpec, KnownLearnerName]] | None = None,
    estimators: Sequence[EstimatorKind] = ('plugin', 'debiased'),
    *,
    n_jobs: int = 1,
) -> list[McReport]:
    """Run the learner × estimator × n grid around a base configuration, in that nesting order."""
    learners = [base.learner] if learners is None else list(learners)
    reports = []
    for learner in learners:
        for estimator in estimators:
            for n in ns:
                reports.append(run_mc(replace(base, learner=learner, estimator=estimator, n=n), n_jobs=n_jobs))
    return reports


def grid_records(reports: Sequence[McReport]) -> list[dict[str, Any]]:
    """One row per sample size with `{estimator} {learner} bias` and `... coverage` columns."""
    rows: dict[int, dict[str, Any]] = {}
    for report in reports:
        row = rows.setdefault(report.n, {'n': report.n})
        label = f'{"debiased" if report.estimator == "debiased" else "plug-in"} {report.learner}'
        row[f'{label} bias'] = report.bias
        row[f'{label} coverage'] = report.coverage
    return [rows[n] for n in sorted(rows)]


def write_grid(reports: Sequence[McReport], prefix: str | Path) -> tuple[Path, Path]:
    """Write `{prefix}.csv` (one row per cell) and `{prefix}.txt` (the bias/coverage grid as aligned text)."""
    prefix = Path(prefix)
    csv_path = prefix.with_name(prefix.name + '.csv')
    txt_path = prefix.with_name(prefix.name + '.txt')
    csv_path.write_text(records_to_csv([report.record() for report in reports]), encoding='utf-8')
    first = reports[0]
    title = f'{first.estimand} on {first.dgp} (sigma={first.sigma}), {first.reps} replications'
    rows = [
        {key: f'{value:.3f}' if isinstance(value, float) else value for key, value in row.items()}
        for row in grid_records(reports)
    ]
    txt_path.write_text(format_records(rows, title=title), encoding='utf-8')
    return csv_path, txt_path
