"""Finite-difference check that the debiased moment is locally insensitive to the first step.

The empirical pair means of the identifying moment `g` and of the orthogonal moment `ψ = g + φ` are evaluated
at `γ̂ + ε·v` for a perturbation direction `v`, and their central-difference slopes in `ε` are compared.
"""

from __future__ import annotations as _annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import logfire_api
import numpy as np
from numpy.typing import NDArray

from .._utils import sgn
from ..data import Dataset, design_matrix
from ..exceptions import ConfigurationError
from ..learners import FittedModel
from ..ustat import FunctionKernel, PairKernel, u_mean

__all__ = ('OrthogonalityEstimand', 'Direction', 'OrthogonalityReport', 'orthogonality_check', 'MAX_SLOPE_RATIO')

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')

OrthogonalityEstimand = Literal['varfv', 'iop', 'ranking']

Direction = Callable[[NDArray[np.float64]], NDArray[np.float64]]
"""Maps the design matrix to the perturbation `v(X_i)` of every observation."""

MAX_SLOPE_RATIO = 0.1
"""The check passes when `|slope(ψ)| <= MAX_SLOPE_RATIO · |slope(g)|` at every step size."""


@dataclass
class OrthogonalityReport:
    estimand: OrthogonalityEstimand
    eps_grid: list[float]
    theta: float
    """Value of the parameter held fixed in both moments."""
    psi_slopes: list[float] = field(default_factory=list)
    g_slopes: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    """`|slope(ψ)| / |slope(g)|` per step size; infinite where only `slope(g)` vanishes."""

    @property
    def max_ratio(self) -> float:
        return max(self.ratios)

    @property
    def passed(self) -> bool:
        return self.max_ratio <= MAX_SLOPE_RATIO


def _moments(
    estimand: OrthogonalityEstimand, y: NDArray[np.float64], theta: float
) -> tuple[Callable[[NDArray[np.float64]], PairKernel], Callable[[NDArray[np.float64]], PairKernel]]:
    """Pair kernels `(g, ψ)` as functions of the first-step values."""
    if estimand == 'varfv':

        def g_varfv(gamma):
            return FunctionKernel(lambda i, j: 0.5 * (gamma[i] - gamma[j]) ** 2 - theta)

        def psi_varfv(gamma):
            def k(i, j):
                dg = gamma[i] - gamma[j]
                return dg * ((y[i] - y[j]) - 0.5 * dg) - theta

            return FunctionKernel(k)

        return g_varfv, psi_varfv

    if estimand == 'iop':

        def g_iop(gamma):
            return FunctionKernel(lambda i, j: np.abs(gamma[i] - gamma[j]) - theta * (gamma[i] + gamma[j]))

        def psi_iop(gamma):
            return FunctionKernel(lambda i, j: sgn(gamma[i] - gamma[j]) * (y[i] - y[j]) - theta * (y[i] + y[j]))

        return g_iop, psi_iop

    def g_ranking(gamma):
        return FunctionKernel(lambda i, j: 0.5 * ((y[i] - y[j]) ** 2 - np.abs(gamma[i] - gamma[j])) - theta)

    def psi_ranking(gamma):
        def k(i, j):
            dy = y[i] - y[j]
            return 0.5 * dy * (dy - sgn(gamma[i] - gamma[j])) - theta

        return FunctionKernel(k)

    return g_ranking, psi_ranking


def _default_theta(estimand: OrthogonalityEstimand, y: NDArray[np.float64], gamma: NDArray[np.float64]) -> float:
    n = y.shape[0]
    if estimand == 'iop':
        numerator = u_mean(FunctionKernel(lambda i, j: sgn(gamma[i] - gamma[j]) * (y[i] - y[j])), n)
        return float(numerator) / (2.0 * float(np.mean(y)))
    _, psi = _moments(estimand, y, 0.0)
    return float(u_mean(psi(gamma), n))


def orthogonality_check(
    estimand: OrthogonalityEstimand,
    data: Dataset,
    gamma: FittedModel,
    direction: Direction,
    eps_grid: Sequence[float] = (1e-2, 1e-3),
    *,
    design: NDArray[np.float64] | None = None,
    theta: float | None = None,
) -> OrthogonalityReport:
    """Compare the first-step sensitivity of the orthogonal and the identifying moment.

    For each `ε` the slopes are the central differences `(m(γ̂ + εv) - m(γ̂ - εv)) / 2ε` of the pair means of
    `g` and of `ψ`. The orthogonal moment of `iop` uses `α = sgn(Δγ)`, so its slope is driven only by pairs whose
    fitted-value order flips.

    Args:
        estimand: `varfv`, `iop` or `ranking`.
        data: The sample.
        gamma: A fitted first step.
        direction: Perturbation direction; a constant direction is degenerate for `varfv`.
        eps_grid: Step sizes.
        design: Design matrix of `gamma`; defaults to main effects.
        theta: Parameter value held fixed; defaults to the estimate implied by `ψ` at `γ̂`.
    """
    if estimand not in ('varfv', 'iop', 'ranking'):
        raise ConfigurationError(f'Orthogonality check supports varfv, iop and ranking, got {estimand!r}')
    if not eps_grid or any(eps <= 0.0 for eps in eps_grid):
        raise ConfigurationError('eps_grid must hold positive step sizes')
    design = design_matrix(data) if design is None else design
    y = data.y
    n = data.n
    fitted = gamma.predict(design)
    v = np.broadcast_to(np.asarray(direction(design), dtype=np.float64), fitted.shape)
    theta = _default_theta(estimand, y, fitted) if theta is None else theta
    g_kernel, psi_kernel = _moments(estimand, y, theta)

    report = OrthogonalityReport(estimand=estimand, eps_grid=[float(eps) for eps in eps_grid], theta=theta)
    with _logfire.span('orthogonality check for {estimand}', estimand=estimand, n=n):
        for eps in report.eps_grid:
            up = fitted + eps * v
            down = fitted - eps * v
            g_slope = (float(u_mean(g_kernel(up), n)) - float(u_mean(g_kernel(down), n))) / (2.0 * eps)
            psi_slope = (float(u_mean(psi_kernel(up), n)) - float(u_mean(psi_kernel(down), n))) / (2.0 * eps)
            report.g_slopes.append(g_slope)
            report.psi_slopes.append(psi_slope)
            if g_slope != 0.0:
                report.ratios.append(abs(psi_slope) / abs(g_slope))
            else:
                report.ratios.append(0.0 if psi_slope == 0.0 else float('inf'))
    _logfire.info('orthogonality slope ratio {ratio}', ratio=report.max_ratio, passed=report.passed)
    return report
