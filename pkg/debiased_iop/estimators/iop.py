"""Gini measure of inequality of opportunity: the Gini coefficient of `E[Y | X]`.

The plug-in estimator is the sample Gini of fitted values. The debiased estimators add the first-step
correction `α̂(x_i, x_j)(Y_i - Y_j - γ̂(x_i) + γ̂(x_j))` on cross-fitted pair blocks and divide by the outcome
denominator `Σ_{i<j}(Y_i + Y_j)`. With `α̂ = sgn(γ̂(x_i) - γ̂(x_j))` the numerator collapses to
`Σ sgn(γ̂(x_i) - γ̂(x_j))(Y_i - Y_j)`: outcome differences ordered by the fitted values.
"""

from __future__ import annotations as _annotations

import math
import warnings
from typing import Literal, Union

import logfire_api
import numpy as np
from joblib import Parallel, delayed
from numpy.typing import NDArray

from .._utils import as_float_array, sgn
from ..crossfit import FoldPartition, training_indices
from ..data import Dataset, design_matrix, validate_for_iop
from ..exceptions import DomainError, InvalidInferenceWarning
from ..learners import FittedModel
from ..result import Diagnostics, EstimateResult, Method, build_result
from ..settings import EstimatorSettings, resolve_estimator_settings
from ..ustat import FunctionKernel, PairKernel, loo_means, sigma_hat, symmetrize
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

__all__ = (
    'gini_classic',
    'iop_gini_plugin',
    'iop_gini_debiased_np',
    'iop_gini_debiased_general',
    'iop_gini_se',
)

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')

AlphaChoice = Union[LearnerLike, Literal['pairwise', 'zero']]


def _abs_pair_sum(values: NDArray[np.float64]) -> float:
    """`Σ_{i<j} |v_i - v_j|` in `O(n log n)`."""
    ordered = np.sort(values)
    n = ordered.shape[0]
    weights = 2.0 * np.arange(n) - (n - 1)
    return math.fsum((weights * ordered).tolist())


def _pair_denominator(values: NDArray[np.float64]) -> float:
    """`Σ_{i<j} (v_i + v_j) = (n - 1) Σ_i v_i`."""
    return (values.shape[0] - 1) * math.fsum(values.tolist())


def gini_classic(y: NDArray[np.float64]) -> float:
    """The sample Gini coefficient `Σ_{i<j}|y_i - y_j| / Σ_{i<j}(y_i + y_j)`.

    Raises:
        DomainError: The denominator is not positive.
    """
    y = as_float_array(y, 1, 'y')
    denominator = _pair_denominator(y)
    if not denominator > 0.0:
        raise DomainError('Gini denominator nonpositive')
    return _abs_pair_sum(y) / denominator


def _psi_kernel(
    y: NDArray[np.float64], gamma: NDArray[np.float64], alpha: AlphaValues, theta: float
) -> PairKernel:
    def psi(i, j):
        dg = gamma[i] - gamma[j]
        return theta * (y[i] + y[j]) - np.abs(dg) - alpha.pair(i, j) * ((y[i] - y[j]) - dg)

    return symmetrize(FunctionKernel(psi, symmetric=alpha.antisymmetric))


def _variance(
    y: NDArray[np.float64], gamma: NDArray[np.float64], alpha: AlphaValues, theta: float, cfg: EstimatorSettings
) -> tuple[float, float]:
    """`V̂ = Σ̂ / B̂²` with `B̂ = 2·mean(y)`, from the full-sample `ψ`; returns `(V̂, Σ̂)`."""
    psi = _psi_kernel(y, gamma, alpha, theta)
    loo = loo_means(psi, y.shape[0], n_jobs=cfg['n_jobs'], chunk_elements=cfg['chunk_elements'])
    sigma = float(sigma_hat(loo))
    b = 2.0 * float(np.mean(y))
    return sigma / (b * b), sigma


def iop_gini_se(
    data: Dataset,
    gamma_full: FittedModel,
    alpha_full: AlphaModel,
    theta: float,
    *,
    design: NDArray[np.float64] | None = None,
    alpha_design: NDArray[np.float64] | None = None,
    settings: EstimatorSettings | None = None,
) -> float:
    """Standard error `√(V̂/n)` of a debiased Gini estimate.

    `V̂ = mean(Y)^{-2} · 1/(n(n-1)²) Σ_i (Σ_{j≠i} θ̂(Y_i + Y_j) - |Δγ̂| - α̂(ΔY - Δγ̂))²`, with `γ̂` and `α̂` fitted
    on the full sample (no cross-fitting).

    Args:
        data: The sample.
        gamma_full: First step refitted on the full sample.
        alpha_full: `α̂` refitted on the full sample.
        theta: The point estimate.
        design: Design matrix of `gamma_full`; defaults to main effects.
        alpha_design: Design matrix of the additive `α̂` components; defaults to `design`.
        settings: Estimator settings.
    """
    cfg = resolve_estimator_settings(settings)
    design = design_matrix(data) if design is None else design
    gamma = gamma_full.predict(design)
    alpha = alpha_full.evaluate(gamma, design if alpha_design is None else alpha_design)
    variance, _ = _variance(data.y, gamma, alpha, theta, cfg)
    return math.sqrt(variance / data.n)


def _diagnostics(
    *,
    sigma: float,
    theta: float,
    scale: float,
    gamma_full: NDArray[np.float64],
    rmse: float,
    cfg: EstimatorSettings,
    crossfit: bool,
) -> Diagnostics:
    degenerate, notes = check_degenerate(sigma, scale, cfg)
    return Diagnostics(
        degenerate=degenerate,
        negative_iop=theta < 0.0,
        first_stage_rmse=rmse,
        tie_fraction=tie_fraction(gamma_full),
        sigma_hat=sigma,
        crossfit=crossfit,
        notes=notes,
    )


def iop_gini_plugin(
    data: Dataset,
    spec: LearnerLike,
    *,
    folds: FoldPartition | None = None,
    settings: EstimatorSettings | None = None,
) -> EstimateResult:
    """Sample Gini of fitted values.

    The reported standard error treats the fitted values as data and is not valid for inference on the IOp;
    `diagnostics.invalid_se` is set and an [`InvalidInferenceWarning`][debiased_iop.exceptions.InvalidInferenceWarning]
    is issued.

    Args:
        data: The sample.
        spec: First-step learner.
        folds: When given, the plug-in is cross-fitted on the pair blocks of this partition (ablation).
        settings: Estimator settings.
    """
    cfg = resolve_estimator_settings(settings)
    validate_for_iop(data)
    learner = resolve_learner(spec)
    design = learner_design(data, learner)
    y = data.y
    with _logfire.span('plug-in IOp Gini', n=data.n, learner=learner.name(), crossfit=folds is not None):
        model = learner.fit(design, y)
        gamma = model.predict(design)
        if folds is None:
            theta = gini_classic(gamma)
            residual = y - gamma
            rmse = float(np.sqrt(np.mean(residual * residual)))
        else:
            blocks = check_folds(data, folds)
            fits = fit_blocks(learner, design, y, blocks, n_jobs=cfg['n_jobs'])

            def numerator(l: int) -> PairKernel:  # noqa: E741
                g = fits.values[l]
                return FunctionKernel(lambda i, j: np.abs(g[i] - g[j]))

            def denominator(l: int) -> PairKernel:  # noqa: E741
                g = fits.values[l]
                return FunctionKernel(lambda i, j: g[i] + g[j])

            bottom = crossfit_sum(blocks, denominator, cfg)
            if not bottom > 0.0:
                raise DomainError('Gini denominator nonpositive')
            theta = crossfit_sum(blocks, numerator, cfg) / bottom
            rmse = fits.out_of_fold_rmse(y)

        pair_mean = float(np.mean(gamma))
        if pair_mean > 0.0:
            # fitted values stand in for the outcome and no correction term is used
            variance, sigma = _variance(gamma, gamma, AlphaValues(kind='zero'), theta, cfg)
        else:
            variance, sigma = 0.0, 0.0
        diagnostics = _diagnostics(
            sigma=sigma, theta=theta, scale=pair_mean, gamma_full=gamma, rmse=rmse, cfg=cfg, crossfit=folds is not None
        )
        diagnostics.invalid_se = True
        diagnostics.notes.append(
            'plug-in standard error ignores first-step estimation; inference on the IOp is invalid'
        )
    warnings.warn(
        'The plug-in Gini standard error ignores first-step estimation and is not valid for inference',
        InvalidInferenceWarning,
        stacklevel=2,
    )
    return build_result(
        estimand='iop',
        method='plugin',
        theta=theta,
        variance=variance,
        n=data.n,
        level=cfg['level'],
        learner=learner_summary(learner, spec),
        diagnostics=diagnostics,
        folds=None if folds is None else folds.K,
        seed=None if folds is None else folds.seed,
    )


def iop_gini_debiased_np(
    data: Dataset,
    spec: LearnerLike,
    folds: FoldPartition,
    *,
    settings: EstimatorSettings | None = None,
) -> EstimateResult:
    """Debiased Gini IOp in the joint nonparametric form.

    `θ̂ = Σ_l Σ_{(i,j) ∈ I_l} sgn(γ̂_l(X_i) - γ̂_l(X_j))(Y_i - Y_j) / Σ_{i<j}(Y_i + Y_j)`, with `γ̂_l` trained
    outside the folds of block `l` and `sgn(0) = 0`.
    """
    return _debiased(data, spec, 'pairwise', folds, settings, 'debiased_np')


def iop_gini_debiased_general(
    data: Dataset,
    spec: LearnerLike,
    alpha_spec: AlphaChoice,
    folds: FoldPartition,
    *,
    settings: EstimatorSettings | None = None,
) -> EstimateResult:
    """Debiased Gini IOp with a separately estimated `α̂`.

    `θ̂ = Σ_l Σ_{(i,j) ∈ I_l} [|Δγ̂_l| + α̂_l(X_i, X_j)(ΔY - Δγ̂_l)] / Σ_{i<j}(Y_i + Y_j)`.

    Args:
        data: The sample.
        spec: First-step learner for `γ̂`.
        alpha_spec: Learner for the additive components of `α̂`, or `'pairwise'` for `α̂ = δ(·, γ̂)`,
            or `'zero'` for no correction.
        folds: Fold partition, `K >= 3`.
        settings: Estimator settings.
    """
    return _debiased(data, spec, alpha_spec, folds, settings, 'debiased_general')


def _debiased(
    data: Dataset,
    spec: LearnerLike,
    alpha_spec: AlphaChoice,
    folds: FoldPartition,
    settings: EstimatorSettings | None,
    method: Method,
) -> EstimateResult:
    cfg = resolve_estimator_settings(settings)
    validate_for_iop(data)
    blocks = check_folds(data, folds)
    learner = resolve_learner(spec)
    design = learner_design(data, learner)
    y = data.y
    n = data.n
    if isinstance(alpha_spec, str) and alpha_spec in ('pairwise', 'zero'):
        alpha_kind = alpha_spec
        alpha_learner = None
        alpha_design = design
    else:
        alpha_kind = 'additive'
        alpha_learner = resolve_learner(alpha_spec)  # pyright: ignore[reportArgumentType]
        alpha_design = learner_design(data, alpha_learner)

    with _logfire.span('debiased IOp Gini ({method})', method=method, n=n, K=folds.K, learner=learner.name()):
        fits = fit_blocks(learner, design, y, blocks, n_jobs=cfg['n_jobs'])

        def block_alpha(l: int) -> AlphaValues:  # noqa: E741
            gamma_l = fits.values[l]
            if alpha_learner is None:
                return AlphaValues(kind=alpha_kind, gamma=gamma_l)  # pyright: ignore[reportArgumentType]
            train = training_indices(blocks, l)
            model = fit_additive_alpha(alpha_learner, fits.models[l].predict(design[train]), alpha_design[train])
            members = blocks[l].members
            first = np.full(n, np.nan)
            second = np.full(n, np.nan)
            first[members] = model.first.predict(alpha_design[members])  # pyright: ignore[reportOptionalMemberAccess]
            second[members] = model.second.predict(alpha_design[members])  # pyright: ignore[reportOptionalMemberAccess]
            return AlphaValues(kind='additive', first=first, second=second, constant=model.constant)

        if alpha_learner is not None and cfg['n_jobs'] > 1:
            alphas = Parallel(n_jobs=cfg['n_jobs'], prefer='threads')(delayed(block_alpha)(l) for l in range(blocks.L))
        else:
            alphas = [block_alpha(l) for l in range(blocks.L)]

        def kernel(l: int) -> PairKernel:  # noqa: E741
            g = fits.values[l]
            alpha = alphas[l]
            if method == 'debiased_np':
                return FunctionKernel(lambda i, j: sgn(g[i] - g[j]) * (y[i] - y[j]))

            def term(i, j):
                dg = g[i] - g[j]
                return np.abs(dg) + alpha.pair(i, j) * ((y[i] - y[j]) - dg)

            return symmetrize(FunctionKernel(term, symmetric=alpha.antisymmetric))

        denominator = _pair_denominator(y)
        theta = crossfit_sum(blocks, kernel, cfg) / denominator

        full = learner.fit(design, y)
        gamma_full = full.predict(design)
        if alpha_learner is None:
            alpha_full = AlphaModel(kind=alpha_kind)  # pyright: ignore[reportArgumentType]
        else:
            alpha_full = fit_additive_alpha(alpha_learner, gamma_full, alpha_design)
        variance, sigma = _variance(y, gamma_full, alpha_full.evaluate(gamma_full, alpha_design), theta, cfg)
        diagnostics = _diagnostics(
            sigma=sigma,
            theta=theta,
            scale=float(np.mean(y)),
            gamma_full=gamma_full,
            rmse=fits.out_of_fold_rmse(y),
            cfg=cfg,
            crossfit=True,
        )
        if theta < 0.0:
            _logfire.warn('negative debiased IOp estimate {theta}', theta=theta)
            diagnostics.notes.append('negative IOp estimate reported as is')
        _logfire.info('IOp estimate {theta}', theta=theta, sigma_hat=sigma)

    summary = learner_summary(learner, spec)
    if alpha_learner is not None:
        summary = summary | {'alpha': learner_summary(alpha_learner, alpha_spec)}
    elif method == 'debiased_general':
        summary = summary | {'alpha': alpha_kind}
    return build_result(
        estimand='iop',
        method=method,
        theta=theta,
        variance=variance,
        n=n,
        level=cfg['level'],
        learner=summary,
        diagnostics=diagnostics,
        folds=folds.K,
        seed=folds.seed,
    )
