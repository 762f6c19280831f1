"""Treatment-effect contrasts `θ0 = E[h(Y_i(1), Y_j(0))]` over independent pairs under unconfoundedness.

With propensity `γ(x) = P(D = 1 | x)` the identifying pair moment is the inverse-propensity weighted kernel

    g(W_i, W_j, γ) = ½ [D_i(1-D_j) h(Y_i, Y_j) / (γ(X_i)(1-γ(X_j))) + D_j(1-D_i) h(Y_j, Y_i) / (γ(X_j)(1-γ(X_i)))]

and the first-step correction is `α(X_i)(D_i - γ(X_i)) + α(X_j)(D_j - γ(X_j))`, with `α(x)` the conditional mean
of the derivative of `g` with respect to `γ(X_i)`. Substituting that derivative pair by pair for `α` (the joint
nonparametric shortcut) is available too, but the substituted weight depends on `D_i` and biases the estimate.
`h(a, b) = a - b` gives the average treatment effect, `h(a, b) = 1(a >= b)` the probability that a treated
outcome exceeds an independent untreated one.
"""

from __future__ import annotations as _annotations

import math
import warnings
from collections.abc import Callable
from typing import Literal, Union

import logfire_api
import numpy as np
from numpy.typing import NDArray

from .._utils import as_float_array, n_choose_2
from ..crossfit import FoldPartition, training_indices
from ..data import Dataset
from ..exceptions import ConfigurationError, DomainError, InvalidInferenceWarning, UsageError
from ..learners import Learner, LearnerSpec
from ..result import Diagnostics, EstimateResult, build_result
from ..settings import EstimatorSettings, resolve_estimator_settings
from ..ustat import FunctionKernel, PairKernel, loo_means, sigma_hat, u_mean
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
from .alpha import AlphaKind, AlphaModel, AlphaValues

__all__ = (
    'ContrastFunction',
    'ContrastName',
    'ContrastAlphaChoice',
    'CONTRASTS',
    'resolve_contrast',
    'contrast_te_plugin',
    'contrast_te_debiased',
    'fit_contrast_alpha',
    'ipw_ate',
)

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')

ContrastFunction = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]
"""`h(a, b)`, vectorized over broadcast arrays of treated outcomes `a` and untreated outcomes `b`."""

ContrastName = Literal['difference', 'indicator']

ContrastAlphaChoice = Union[LearnerLike, Literal['pairwise', 'zero']]


def _difference(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    return a - b


def _indicator(a: NDArray[np.float64], b: NDArray[np.float64]) -> NDArray[np.float64]:
    return (a >= b).astype(np.float64)


CONTRASTS: dict[str, ContrastFunction] = {'difference': _difference, 'indicator': _indicator}


def resolve_contrast(h: ContrastFunction | ContrastName) -> ContrastFunction:
    if callable(h):
        return h
    try:
        return CONTRASTS[h]
    except KeyError:
        raise ConfigurationError(f'Unknown contrast {h!r}, expected one of {sorted(CONTRASTS)}') from None


def _treatment(data: Dataset) -> NDArray[np.float64]:
    if data.d is None:
        raise DomainError('Treatment contrasts need a treatment column', column=data.d_name)
    treated = int(np.sum(data.d))
    if treated == 0 or treated == data.n:
        raise DomainError(
            'No informative pairs: every observation is ' + ('treated' if treated else 'untreated'),
            column=data.d_name,
        )
    return data.d


def _clipper(clip: float) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    def apply(values: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.clip(values, clip, 1.0 - clip)

    return apply


def _g(y, d, e, h: ContrastFunction, i, j):
    forward = d[i] * (1.0 - d[j]) * h(y[i], y[j]) / (e[i] * (1.0 - e[j]))
    backward = d[j] * (1.0 - d[i]) * h(y[j], y[i]) / (e[j] * (1.0 - e[i]))
    return 0.5 * (forward + backward)


def _delta(y, d, e, h: ContrastFunction, i, j):
    """Derivative of `g` with respect to `γ(X_i)`."""
    from_backward = d[j] * (1.0 - d[i]) * h(y[j], y[i]) / (e[j] * (1.0 - e[i]) ** 2)
    from_forward = d[i] * (1.0 - d[j]) * h(y[i], y[j]) / (e[i] ** 2 * (1.0 - e[j]))
    return 0.5 * (from_backward - from_forward)


def _weights(y, d, h: ContrastFunction, alpha: AlphaValues, i, j):
    """Weights on the residuals `D_i - γ̂(X_i)` and `D_j - γ̂(X_j)`."""
    if alpha.kind == 'projection':
        assert alpha.first is not None
        return alpha.first[i], alpha.first[j]
    assert alpha.gamma is not None
    return _delta(y, d, alpha.gamma, h, i, j), _delta(y, d, alpha.gamma, h, j, i)


def _moment_kernel(
    y: NDArray[np.float64],
    d: NDArray[np.float64],
    e: NDArray[np.float64],
    h: ContrastFunction,
    alpha: AlphaValues | None = None,
    shift: float = 0.0,
) -> PairKernel:
    def k(i, j):
        value = _g(y, d, e, h, i, j)
        if alpha is not None and alpha.kind != 'zero':
            w_i, w_j = _weights(y, d, h, alpha, i, j)
            value = value + w_i * (d[i] - e[i]) + w_j * (d[j] - e[j])
        return value - shift

    return FunctionKernel(k)


def fit_contrast_alpha(
    learner: Learner,
    y: NDArray[np.float64],
    d: NDArray[np.float64],
    e: NDArray[np.float64],
    design: NDArray[np.float64],
    h: ContrastFunction,
    settings: EstimatorSettings,
) -> AlphaModel:
    """Regress the leave-one-out pair averages `(m-1)^{-1} Σ_{j≠k} δ(W_k, W_j, γ̂)` on the covariates."""
    m = y.shape[0]
    kernel = FunctionKernel(lambda i, j: _delta(y, d, e, h, i, j), symmetric=False)
    target = loo_means(kernel, m, n_jobs=1, chunk_elements=settings['chunk_elements']).means
    return AlphaModel(kind='projection', first=learner.fit(design, target))


def contrast_te_plugin(
    data: Dataset,
    h: ContrastFunction | ContrastName,
    spec: LearnerLike,
    *,
    folds: FoldPartition | None = None,
    settings: EstimatorSettings | None = None,
) -> EstimateResult:
    """Pairwise inverse-propensity weighted contrast `C(n,2)^{-1} Σ_{i<j} g(W_i, W_j, γ̂)`.

    The propensity is fitted on the full sample and clamped to `[ε, 1-ε]`. The standard error ignores
    first-step estimation; `diagnostics.invalid_se` is set.
    """
    cfg = resolve_estimator_settings(settings)
    h = resolve_contrast(h)
    d = _treatment(data)
    y = data.y
    n = data.n
    clip = _clipper(cfg['propensity_clip'])
    learner = resolve_learner(spec)
    design = learner_design(data, learner)

    with _logfire.span('plug-in treatment contrast', n=n, learner=learner.name(), crossfit=folds is not None):
        e = clip(learner.fit(design, d).predict(design))
        if folds is None:
            theta = float(
                u_mean(_moment_kernel(y, d, e, h), n, n_jobs=cfg['n_jobs'], chunk_elements=cfg['chunk_elements'])
            )
            residual = d - e
            rmse = float(np.sqrt(np.mean(residual * residual)))
        else:
            blocks = check_folds(data, folds)
            fits = fit_blocks(learner, design, d, blocks, n_jobs=cfg['n_jobs'], transform_values=clip)
            theta = crossfit_sum(blocks, lambda l: _moment_kernel(y, d, fits.values[l], h), cfg) / n_choose_2(n)
            rmse = fits.out_of_fold_rmse(d)
        psi = _moment_kernel(y, d, e, h, shift=theta)
        loo = loo_means(psi, n, n_jobs=cfg['n_jobs'], chunk_elements=cfg['chunk_elements'])
        sigma = float(sigma_hat(loo))

    warnings.warn(
        'The plug-in standard error ignores first-step estimation and is not valid for inference',
        InvalidInferenceWarning,
        stacklevel=2,
    )
    return build_result(
        estimand='contrast',
        method='plugin',
        theta=theta,
        variance=sigma,
        n=n,
        level=cfg['level'],
        learner=learner_summary(learner, spec),
        diagnostics=Diagnostics(
            first_stage_rmse=rmse,
            tie_fraction=tie_fraction(e),
            sigma_hat=sigma,
            invalid_se=True,
            crossfit=folds is not None,
            notes=['plug-in standard error ignores first-step estimation'],
        ),
        folds=None if folds is None else folds.K,
        seed=None if folds is None else folds.seed,
    )


def contrast_te_debiased(
    data: Dataset,
    h: ContrastFunction | ContrastName,
    spec: LearnerLike,
    folds: FoldPartition,
    *,
    alpha_spec: ContrastAlphaChoice | None = None,
    settings: EstimatorSettings | None = None,
) -> EstimateResult:
    """Debiased treatment-effect contrast.

    `θ̂ = C(n,2)^{-1} Σ_l Σ_{(i,j) ∈ I_l} [g(W_i, W_j, γ̂_l) + α̂_l(X_i)(D_i - γ̂_l(X_i))
    + α̂_l(X_j)(D_j - γ̂_l(X_j))]`.

    Args:
        data: The sample; `data.d` must hold both treated and untreated observations.
        h: The pair contrast, a name from [`CONTRASTS`][debiased_iop.estimators.contrast.CONTRASTS] or a function.
        spec: Propensity learner. Fitted values are clamped to `[ε, 1-ε]` with `ε = settings['propensity_clip']`.
        folds: Fold partition, `K >= 3`.
        alpha_spec: Learner for the projection `α̂_l(x)`, regressing the leave-one-out pair averages of the
            derivative of `g` over the training observations on `X`; `None` uses ridge with a cross-validated
            penalty. `'pairwise'` substitutes `α̂_l = δ(·, γ̂_l)` pair by pair; that weight depends on `D_i`, so
            the correction does not average to zero and `diagnostics.biased_correction` is set. `'zero'` drops
            the correction.
        settings: Estimator settings.

    Raises:
        DomainError: No treatment column, or every observation has the same treatment.
    """
    cfg = resolve_estimator_settings(settings)
    h = resolve_contrast(h)
    d = _treatment(data)
    y = data.y
    n = data.n
    blocks = check_folds(data, folds)
    clip = _clipper(cfg['propensity_clip'])
    learner = resolve_learner(spec)
    design = learner_design(data, learner)
    if isinstance(alpha_spec, str) and alpha_spec in ('pairwise', 'zero'):
        alpha_kind: AlphaKind = alpha_spec  # pyright: ignore[reportAssignmentType]
        alpha_learner = None
        alpha_design = design
    else:
        alpha_kind = 'projection'
        alpha_learner = resolve_learner(LearnerSpec(kind='ridge') if alpha_spec is None else alpha_spec)
        alpha_design = learner_design(data, alpha_learner)

    with _logfire.span('debiased treatment contrast', n=n, K=folds.K, learner=learner.name(), alpha=alpha_kind):
        fits = fit_blocks(learner, design, d, blocks, n_jobs=cfg['n_jobs'], transform_values=clip)

        def block_kernel(l: int) -> PairKernel:  # noqa: E741
            e = fits.values[l]
            if alpha_learner is None:
                return _moment_kernel(y, d, e, h, AlphaValues(kind=alpha_kind, gamma=e))
            train = training_indices(blocks, l)
            e_train = clip(fits.models[l].predict(design[train]))
            model = fit_contrast_alpha(alpha_learner, y[train], d[train], e_train, alpha_design[train], h, cfg)
            members = blocks[l].members
            weights = np.full(n, np.nan)
            weights[members] = model.evaluate(e, alpha_design[members]).first
            return _moment_kernel(y, d, e, h, AlphaValues(kind='projection', first=weights))

        theta = crossfit_sum(blocks, block_kernel, cfg) / n_choose_2(n)

        e_full = clip(learner.fit(design, d).predict(design))
        if alpha_learner is None:
            alpha_full = AlphaModel(kind=alpha_kind)
        else:
            alpha_full = fit_contrast_alpha(alpha_learner, y, d, e_full, alpha_design, h, cfg)
        loo = loo_means(
            _moment_kernel(y, d, e_full, h, alpha_full.evaluate(e_full, alpha_design), shift=theta),
            n,
            n_jobs=cfg['n_jobs'],
            chunk_elements=cfg['chunk_elements'],
        )
        sigma = float(sigma_hat(loo))
        degenerate, notes = check_degenerate(sigma, float(np.std(y)), cfg)
        biased = alpha_kind == 'pairwise'
        if biased:
            _logfire.warn('pairwise contrast correction has nonzero mean; the estimate may be biased')
            notes.append('pairwise correction weights depend on treatment; estimate may be biased')
        _logfire.info('treatment contrast estimate {theta}', theta=theta, sigma_hat=sigma)

    summary = learner_summary(learner, spec)
    if alpha_learner is None:
        summary = summary | {'alpha': alpha_kind}
    else:
        summary = summary | {'alpha': learner_summary(alpha_learner, alpha_spec)}
    return build_result(
        estimand='contrast',
        method='debiased_np' if alpha_kind == 'pairwise' else 'debiased_general',
        theta=theta,
        variance=sigma,
        n=n,
        level=cfg['level'],
        learner=summary,
        diagnostics=Diagnostics(
            degenerate=degenerate,
            first_stage_rmse=fits.out_of_fold_rmse(d),
            tie_fraction=tie_fraction(e_full),
            sigma_hat=sigma,
            crossfit=True,
            biased_correction=biased,
            notes=notes,
        ),
        folds=folds.K,
        seed=folds.seed,
    )


def ipw_ate(
    y: NDArray[np.float64],
    d: NDArray[np.float64],
    propensity: NDArray[np.float64],
    mu0: NDArray[np.float64] | None = None,
    mu1: NDArray[np.float64] | None = None,
) -> tuple[float, float]:
    """Augmented inverse-propensity weighted average treatment effect and its influence-function standard error.

    `τ̂ = n^{-1} Σ_i [μ1(X_i) - μ0(X_i) + D_i(Y_i - μ1(X_i))/e(X_i) - (1-D_i)(Y_i - μ0(X_i))/(1-e(X_i))]`.
    Leaving both outcome models out gives the Horvitz-Thompson estimator.

    Returns:
        `(τ̂, se)`.
    """
    y = as_float_array(y, 1, 'y')
    d = as_float_array(d, 1, 'd')
    e = as_float_array(propensity, 1, 'propensity')
    mu0 = np.zeros_like(y) if mu0 is None else as_float_array(mu0, 1, 'mu0')
    mu1 = np.zeros_like(y) if mu1 is None else as_float_array(mu1, 1, 'mu1')
    if not (d.shape == e.shape == mu0.shape == mu1.shape == y.shape):
        raise UsageError('y, d, propensity and outcome models must have the same length')
    if np.any((e <= 0.0) | (e >= 1.0)):
        raise DomainError('Propensity scores must lie strictly between 0 and 1')
    scores = mu1 - mu0 + d * (y - mu1) / e - (1.0 - d) * (y - mu0) / (1.0 - e)
    estimate = math.fsum(scores.tolist()) / y.shape[0]
    se = float(np.sqrt(np.var(scores, ddof=1) / y.shape[0]))
    return estimate, se
