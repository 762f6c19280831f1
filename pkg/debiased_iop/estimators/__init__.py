"""Plug-in and debiased estimators of pairwise functionals of a first-step regression.

Every estimator returns an [`EstimateResult`][debiased_iop.result.EstimateResult]. Debiased estimators take a
[`FoldPartition`][debiased_iop.crossfit.FoldPartition] with `K >= 3`, evaluate the orthogonal pair moment on
cross-fitted pair blocks and compute the variance from a single full-sample refit of the first step.
"""

from __future__ import annotations as _annotations

from .alpha import AlphaKind, AlphaModel, AlphaValues, fit_additive_alpha, sign_balance
from .contrast import (
    CONTRASTS,
    ContrastAlphaChoice,
    ContrastFunction,
    ContrastName,
    contrast_te_debiased,
    contrast_te_plugin,
    fit_contrast_alpha,
    ipw_ate,
    resolve_contrast,
)
from .iop import gini_classic, iop_gini_debiased_general, iop_gini_debiased_np, iop_gini_plugin, iop_gini_se
from .orthogonality import MAX_SLOPE_RATIO, Direction, OrthogonalityEstimand, OrthogonalityReport, orthogonality_check
from .ranking import check_binary_labels, ranking_risk_debiased, ranking_risk_plugin
from .varfv import varfv_debiased, varfv_plugin

__all__ = (
    'AlphaKind',
    'AlphaModel',
    'AlphaValues',
    'fit_additive_alpha',
    'sign_balance',
    'CONTRASTS',
    'ContrastAlphaChoice',
    'ContrastFunction',
    'ContrastName',
    'contrast_te_debiased',
    'contrast_te_plugin',
    'fit_contrast_alpha',
    'ipw_ate',
    'resolve_contrast',
    'gini_classic',
    'iop_gini_plugin',
    'iop_gini_debiased_np',
    'iop_gini_debiased_general',
    'iop_gini_se',
    'MAX_SLOPE_RATIO',
    'Direction',
    'OrthogonalityEstimand',
    'OrthogonalityReport',
    'orthogonality_check',
    'check_binary_labels',
    'ranking_risk_plugin',
    'ranking_risk_debiased',
    'varfv_plugin',
    'varfv_debiased',
)
