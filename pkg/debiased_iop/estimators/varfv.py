"""Variance of fitted values, `θ0 = Var(γ0(X)) = E[(γ0(X_i) - γ0(X_j))² / 2]`."""

from __future__ import annotations as _annotations

import warnings

import logfire_api
import numpy as np
from numpy.typing import NDArray

from .._utils import n_choose_2
from ..crossfit import FoldPartition
from ..data import Dataset
from ..exceptions import InvalidInferenceWarning
from ..result import Diagnostics, EstimateResult, build_result
from ..settings import EstimatorSettings, resolve_estimator_settings
from ..ustat import FunctionKernel, PairKernel, degeneracy_diagnostic, loo_means, sigma_hat, u_mean
from ._crossfit import (
    LearnerLike,
    check_degenerate,
    check_folds,
    crossfit_sum,
    fit_blocks,
    learner_design,
    learner_summary,
    resolve_learner,
    tie_fraction,
)

__all__ = ('varfv_plugin', 'varfv_debiased')

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')


def _sigma(kernel: PairKernel, n: int, cfg: EstimatorSettings) -> float:
    loo = loo_means(kernel, n, n_jobs=cfg['n_jobs'], chunk_elements=cfg['chunk_elements'])
    return float(sigma_hat(loo))


def _half_square(gamma: NDArray[np.float64]) -> PairKernel:
    return FunctionKernel(lambda i, j: 0.5 * (gamma[i] - gamma[j]) ** 2)


def varfv_plugin(
    data: Dataset,
    spec: LearnerLike,
    *,
    folds: FoldPartition | None = None,
    settings: EstimatorSettings | None = None,
) -> EstimateResult:
    """`C(n,2)^{-1} Σ_{i<j} (γ̂(X_i) - γ̂(X_j))² / 2`, the sample variance of the fitted values.

    The standard error treats the fitted values as data; `diagnostics.invalid_se` is set.

    Args:
        data: The sample.
        spec: First-step learner.
        folds: When given, the pair sum is cross-fitted on the pair blocks of this partition.
        settings: Estimator settings.
    """
    cfg = resolve_estimator_settings(settings)
    learner = resolve_learner(spec)
    design = learner_design(data, learner)
    y = data.y
    n = data.n
    with _logfire.span('plug-in variance of fitted values', n=n, learner=learner.name(), crossfit=folds is not None):
        gamma = learner.fit(design, y).predict(design)
        if folds is None:
            theta = float(u_mean(_half_square(gamma), n, n_jobs=cfg['n_jobs'], chunk_elements=cfg['chunk_elements']))
            residual = y - gamma
            rmse = float(np.sqrt(np.mean(residual * residual)))
        else:
            blocks = check_folds(data, folds)
            fits = fit_blocks(learner, design, y, blocks, n_jobs=cfg['n_jobs'])
            theta = crossfit_sum(blocks, lambda l: _half_square(fits.values[l]), cfg) / n_choose_2(n)
            rmse = fits.out_of_fold_rmse(y)
        g = gamma
        sigma = _sigma(FunctionKernel(lambda i, j: 0.5 * (g[i] - g[j]) ** 2 - theta), n, cfg)

    warnings.warn(
        'The plug-in standard error ignores first-step estimation and is not valid for inference',
        InvalidInferenceWarning,
        stacklevel=2,
    )
    diagnostics = Diagnostics(
        degenerate=degeneracy_diagnostic(sigma, float(np.var(gamma)), cfg['degeneracy_tol']),
        first_stage_rmse=rmse,
        tie_fraction=tie_fraction(gamma),
        sigma_hat=sigma,
        invalid_se=True,
        crossfit=folds is not None,
        notes=['plug-in standard error ignores first-step estimation'],
    )
    return build_result(
        estimand='varfv',
        method='plugin',
        theta=theta,
        variance=sigma,
        n=n,
        level=cfg['level'],
        learner=learner_summary(learner, spec),
        diagnostics=diagnostics,
        folds=None if folds is None else folds.K,
        seed=None if folds is None else folds.seed,
    )


def varfv_debiased(
    data: Dataset,
    spec: LearnerLike,
    folds: FoldPartition,
    *,
    settings: EstimatorSettings | None = None,
) -> EstimateResult:
    """Debiased variance of fitted values.

    `θ̂ = C(n,2)^{-1} Σ_l Σ_{(i,j) ∈ I_l} Δγ̂_l (ΔY - Δγ̂_l / 2)` with `Δγ̂_l = γ̂_l(X_i) - γ̂_l(X_j)` and
    `ΔY = Y_i - Y_j`. The variance is `V̂ = 4/(n(n-1)²) Σ_i (Σ_{j≠i} ψ̂_ij)²` with
    `ψ̂_ij = Δγ̂(ΔY - Δγ̂/2) - θ̂` and `γ̂` refitted on the full sample.
    """
    cfg = resolve_estimator_settings(settings)
    blocks = check_folds(data, folds)
    learner = resolve_learner(spec)
    design = learner_design(data, learner)
    y = data.y
    n = data.n

    def term(g: NDArray[np.float64], shift: float = 0.0) -> PairKernel:
        def k(i, j):
            dg = g[i] - g[j]
            return dg * ((y[i] - y[j]) - 0.5 * dg) - shift

        return FunctionKernel(k)

    with _logfire.span('debiased variance of fitted values', n=n, K=folds.K, learner=learner.name()):
        fits = fit_blocks(learner, design, y, blocks, n_jobs=cfg['n_jobs'])
        theta = crossfit_sum(blocks, lambda l: term(fits.values[l]), cfg) / n_choose_2(n)
        gamma_full = learner.fit(design, y).predict(design)
        sigma = _sigma(term(gamma_full, theta), n, cfg)
        degenerate, notes = check_degenerate(sigma, float(np.var(y)), cfg)

    diagnostics = Diagnostics(
        degenerate=degenerate,
        first_stage_rmse=fits.out_of_fold_rmse(y),
        tie_fraction=tie_fraction(gamma_full),
        sigma_hat=sigma,
        crossfit=True,
        notes=notes,
    )
    return build_result(
        estimand='varfv',
        method='debiased_np',
        theta=theta,
        variance=sigma,
        n=n,
        level=cfg['level'],
        learner=learner_summary(learner, spec),
        diagnostics=diagnostics,
        folds=folds.K,
        seed=folds.seed,
    )
