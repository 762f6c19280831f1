"""Optimal bipartite ranking risk for labels coded `{0, 1}`.

With `γ0(x) = P(Y = 1 | x)` the risk of the best scoring rule is
`θ0 = E[((Y_i - Y_j)² - |γ0(X_i) - γ0(X_j)|) / 2]`, the share of discordant pairs that no ranking of `X` can
order correctly. It shares the `|Δγ|` structure of the Gini numerator, so the same correction applies.
"""

from __future__ import annotations as _annotations

import warnings

import logfire_api
import numpy as np
from numpy.typing import NDArray

from .._utils import n_choose_2, sgn
from ..crossfit import FoldPartition, training_indices
from ..data import Dataset
from ..exceptions import DomainError, InvalidInferenceWarning
from ..result import Diagnostics, EstimateResult, build_result
from ..settings import EstimatorSettings, resolve_estimator_settings
from ..ustat import FunctionKernel, PairKernel, loo_means, sigma_hat, symmetrize, u_mean
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
from .alpha import AlphaModel, AlphaValues, fit_additive_alpha

__all__ = ('ranking_risk_plugin', 'ranking_risk_debiased', 'check_binary_labels')

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')


def check_binary_labels(y: NDArray[np.float64], name: str = 'y') -> None:
    """Check that every label is coded 0 or 1.

    Raises:
        DomainError: Some label is not 0 or 1.
    """
    bad = np.flatnonzero((y != 0.0) & (y != 1.0))
    if bad.size:
        raise DomainError(f'Ranking risk needs labels in {{0, 1}}, got {y[bad[0]]!r}', column=name, row=int(bad[0]) + 1)


def _clip_probability(values: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.clip(values, 0.0, 1.0)


def _sigma(kernel: PairKernel, n: int, cfg: EstimatorSettings) -> float:
    return float(sigma_hat(loo_means(kernel, n, n_jobs=cfg['n_jobs'], chunk_elements=cfg['chunk_elements'])))


def ranking_risk_plugin(
    data: Dataset,
    spec: LearnerLike,
    *,
    folds: FoldPartition | None = None,
    settings: EstimatorSettings | None = None,
) -> EstimateResult:
    """`C(n,2)^{-1} Σ_{i<j} ((Y_i - Y_j)² - |γ̂(X_i) - γ̂(X_j)|) / 2` with `γ̂` clamped to `[0, 1]`.

    The standard error ignores first-step estimation; `diagnostics.invalid_se` is set.
    """
    cfg = resolve_estimator_settings(settings)
    y = data.y
    check_binary_labels(y, data.y_name)
    learner = resolve_learner(spec)
    design = learner_design(data, learner)
    n = data.n

    def g_kernel(g: NDArray[np.float64], shift: float = 0.0) -> PairKernel:
        return FunctionKernel(lambda i, j: 0.5 * ((y[i] - y[j]) ** 2 - np.abs(g[i] - g[j])) - shift)

    with _logfire.span('plug-in ranking risk', n=n, learner=learner.name(), crossfit=folds is not None):
        gamma = _clip_probability(learner.fit(design, y).predict(design))
        if folds is None:
            theta = float(u_mean(g_kernel(gamma), n, n_jobs=cfg['n_jobs'], chunk_elements=cfg['chunk_elements']))
            residual = y - gamma
            rmse = float(np.sqrt(np.mean(residual * residual)))
        else:
            blocks = check_folds(data, folds)
            fits = fit_blocks(learner, design, y, blocks, n_jobs=cfg['n_jobs'], transform_values=_clip_probability)
            theta = crossfit_sum(blocks, lambda l: g_kernel(fits.values[l]), cfg) / n_choose_2(n)
            rmse = fits.out_of_fold_rmse(y)
        sigma = _sigma(g_kernel(gamma, theta), n, cfg)

    warnings.warn(
        'The plug-in standard error ignores first-step estimation and is not valid for inference',
        InvalidInferenceWarning,
        stacklevel=2,
    )
    return build_result(
        estimand='ranking',
        method='plugin',
        theta=theta,
        variance=sigma,
        n=n,
        level=cfg['level'],
        learner=learner_summary(learner, spec),
        diagnostics=Diagnostics(
            first_stage_rmse=rmse,
            tie_fraction=tie_fraction(gamma),
            sigma_hat=sigma,
            invalid_se=True,
            crossfit=folds is not None,
            notes=['plug-in standard error ignores first-step estimation'],
        ),
        folds=None if folds is None else folds.K,
        seed=None if folds is None else folds.seed,
    )


def ranking_risk_debiased(
    data: Dataset,
    spec: LearnerLike,
    folds: FoldPartition,
    *,
    alpha_spec: LearnerLike | None = None,
    settings: EstimatorSettings | None = None,
) -> EstimateResult:
    """Debiased ranking risk.

    With the default pairwise `α̂ = sgn(Δγ̂_l)` the estimate is
    `θ̂ = (n(n-1))^{-1} Σ_l Σ_{(i,j) ∈ I_l} (Y_i - Y_j)(Y_i - Y_j - sgn(γ̂_l(X_i) - γ̂_l(X_j)))`. Passing
    `alpha_spec` uses the additive `α̂` in the general form
    `((ΔY)² - |Δγ̂_l| - α̂_l(ΔY - Δγ̂_l)) / 2`.

    The variance is `V̂ = 4/(n(n-1)²) Σ_i (Σ_{j≠i} ψ̂_ij)²` with `ψ̂` the pair kernel minus `θ̂`, from a full-sample
    refit of `γ̂` (and `α̂`).

    Raises:
        DomainError: Some label is not 0 or 1.
    """
    cfg = resolve_estimator_settings(settings)
    y = data.y
    check_binary_labels(y, data.y_name)
    blocks = check_folds(data, folds)
    learner = resolve_learner(spec)
    design = learner_design(data, learner)
    n = data.n
    alpha_learner = None if alpha_spec is None else resolve_learner(alpha_spec)
    alpha_design = design if alpha_learner is None else learner_design(data, alpha_learner)

    def kernel(g: NDArray[np.float64], alpha: AlphaValues, shift: float = 0.0) -> PairKernel:
        if alpha.kind == 'pairwise':

            def np_term(i, j):
                dy = y[i] - y[j]
                return 0.5 * dy * (dy - sgn(g[i] - g[j])) - shift

            return FunctionKernel(np_term)

        def general_term(i, j):
            dy = y[i] - y[j]
            dg = g[i] - g[j]
            return 0.5 * (dy * dy - np.abs(dg) - alpha.pair(i, j) * (dy - dg)) - shift

        return symmetrize(FunctionKernel(general_term, symmetric=False))

    method = 'debiased_np' if alpha_learner is None else 'debiased_general'
    with _logfire.span('debiased ranking risk ({method})', method=method, n=n, K=folds.K, learner=learner.name()):
        fits = fit_blocks(learner, design, y, blocks, n_jobs=cfg['n_jobs'], transform_values=_clip_probability)

        def block_kernel(l: int) -> PairKernel:  # noqa: E741
            g = fits.values[l]
            if alpha_learner is None:
                return kernel(g, AlphaValues(kind='pairwise', gamma=g))
            train = training_indices(blocks, l)
            gamma_train = _clip_probability(fits.models[l].predict(design[train]))
            model = fit_additive_alpha(alpha_learner, gamma_train, alpha_design[train])
            return kernel(g, model.evaluate(g, alpha_design))

        theta = crossfit_sum(blocks, block_kernel, cfg) / n_choose_2(n)

        gamma_full = _clip_probability(learner.fit(design, y).predict(design))
        if alpha_learner is None:
            alpha_full = AlphaModel(kind='pairwise')
        else:
            alpha_full = fit_additive_alpha(alpha_learner, gamma_full, alpha_design)
        sigma = _sigma(kernel(gamma_full, alpha_full.evaluate(gamma_full, alpha_design), theta), n, cfg)
        degenerate, notes = check_degenerate(sigma, 1.0, cfg)

    summary = learner_summary(learner, spec)
    if alpha_learner is not None:
        summary = summary | {'alpha': learner_summary(alpha_learner, alpha_spec)}
    return build_result(
        estimand='ranking',
        method=method,
        theta=theta,
        variance=sigma,
        n=n,
        level=cfg['level'],
        learner=summary,
        diagnostics=Diagnostics(
            degenerate=degenerate,
            first_stage_rmse=fits.out_of_fold_rmse(y),
            tie_fraction=tie_fraction(gamma_full),
            sigma_hat=sigma,
            crossfit=True,
            notes=notes,
        ),
        folds=folds.K,
        seed=folds.seed,
    )
