"""Penalized linear first steps: ridge and lasso on standardized columns with an unpenalized intercept.

Both minimize over standardized columns `Z` (mean 0, population variance 1) and centered `y`:

* ridge: `(1/2n)‖y - Zβ‖² + (λ/2)‖β‖²`, i.e. `(Z'Z/n + λI)β = Z'y/n`;
* lasso: `(1/2n)‖y - Zβ‖² + λ‖β‖₁`, by cyclic coordinate descent with covariance updates.

Coefficients are reported on the original column scale. Zero-variance columns get a zero coefficient.
"""

from __future__ import annotations as _annotations

import math
from dataclasses import dataclass, field
from typing import Any

import logfire_api
import numpy as np
from numba import njit
from numpy.typing import NDArray
from scipy import linalg

from .._utils import fisher_yates
from ..data import OutcomeTransform
from ..exceptions import ConfigurationError, NumericalError
from . import CvPenalty, CvReport, FittedModel, FixedPenalty, Learner, Penalty

__all__ = (
    'LinearModel',
    'RidgeLearner',
    'LassoLearner',
    'lambda_max',
    'default_grid',
    'kkt_violation',
    'soft_threshold',
)

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')

KKT_TOL = 1e-6
MAX_SWEEPS = 10_000
_STEP_TOL = 1e-12


@dataclass
class LinearModel(FittedModel):
    kind: str
    intercept: float
    coef: NDArray[np.float64]
    """Original-scale coefficients."""
    means: NDArray[np.float64]
    scales: NDArray[np.float64]
    """Population standard deviations of the training columns (0 for constant columns)."""
    lam: float
    transform: OutcomeTransform = 'none'
    cv: CvReport | None = None
    sweeps: int | None = None
    n_features: int = field(init=False)

    def __post_init__(self) -> None:
        self.n_features = int(self.coef.shape[0])

    def predict_raw(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.intercept + x @ self.coef

    @property
    def standardized_coef(self) -> NDArray[np.float64]:
        return self.coef * self.scales

    def summary(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            'kind': self.kind,
            'transform': self.transform,
            'lambda': self.lam,
            'intercept': self.intercept,
            'coef': self.coef.tolist(),
            'nonzero': int(np.count_nonzero(self.coef)),
        }
        if self.cv is not None:
            out['cv'] = {'grid': self.cv.grid, 'rmse': self.cv.rmse, 'chosen': self.cv.chosen, 'folds': self.cv.folds}
        return out


@dataclass
class _Standardized:
    means: NDArray[np.float64]
    scales: NDArray[np.float64]
    usable: NDArray[np.bool_]
    y_mean: float
    gram: NDArray[np.float64]
    """`Z'Z/n` over usable columns (zero rows and columns elsewhere)."""
    corr: NDArray[np.float64]
    """`Z'(y - ȳ)/n`."""


def _standardize(x: NDArray[np.float64], y: NDArray[np.float64]) -> _Standardized:
    n = x.shape[0]
    means = x.mean(axis=0)
    scales = x.std(axis=0)
    usable = scales > 1e-12 * np.maximum(1.0, np.abs(means))
    safe = np.where(usable, scales, 1.0)
    z = (x - means) / safe
    z[:, ~usable] = 0.0
    y_mean = float(np.mean(y))
    yc = y - y_mean
    gram = (z.T @ z) / n
    corr = (z.T @ yc) / n
    scales = np.where(usable, scales, 0.0)
    return _Standardized(means=means, scales=scales, usable=usable, y_mean=y_mean, gram=gram, corr=corr)


def _to_model(
    kind: str, std: _Standardized, beta: NDArray[np.float64], lam: float, transform: OutcomeTransform, **extra: Any
) -> LinearModel:
    coef = np.where(std.usable, beta / np.where(std.usable, std.scales, 1.0), 0.0)
    intercept = std.y_mean - float(coef @ std.means)
    return LinearModel(
        kind=kind,
        intercept=intercept,
        coef=coef,
        means=std.means,
        scales=std.scales,
        lam=lam,
        transform=transform,
        **extra,
    )


def lambda_max(x: NDArray[np.float64], y: NDArray[np.float64]) -> float:
    """Smallest `λ` at which the lasso solution is all zeros: `max_j |z_j'(y - ȳ)| / n`."""
    return float(np.max(np.abs(_standardize(x, y).corr), initial=0.0))


def default_grid(x: NDArray[np.float64], y: NDArray[np.float64], size: int = 100) -> tuple[float, ...]:
    """`size` log-spaced penalties on `[λ_max·1e-4, λ_max]`, largest first."""
    top = lambda_max(x, y)
    if top <= 0.0:
        return (1.0,)
    return tuple(np.geomspace(top, top * 1e-4, size).tolist())


def soft_threshold(value: float, threshold: float) -> float:
    return math.copysign(max(abs(value) - threshold, 0.0), value)


@njit(cache=True, nogil=True)
def _lasso_cd(gram, corr, usable, lam, beta, max_sweeps, tol):  # pragma: no cover
    p = gram.shape[0]
    grad = corr - gram @ beta
    for sweep in range(max_sweeps):
        max_step = 0.0
        for j in range(p):
            if not usable[j]:
                continue
            gjj = gram[j, j]
            old = beta[j]
            z = grad[j] + gjj * old
            if z > lam:
                new = (z - lam) / gjj
            elif z < -lam:
                new = (z + lam) / gjj
            else:
                new = 0.0
            if new != old:
                step = new - old
                beta[j] = new
                for k in range(p):
                    grad[k] -= gram[k, j] * step
                if abs(step) > max_step:
                    max_step = abs(step)
        if max_step < tol:
            return sweep + 1, True
    return max_sweeps, False


def _lasso_solve(std: _Standardized, lam: float, beta: NDArray[np.float64]) -> int:
    """Coordinate descent to KKT tolerance, warm-started from `beta` (updated in place); returns sweeps used."""
    used = 0
    tol = _STEP_TOL
    while True:
        sweeps, converged = _lasso_cd(std.gram, std.corr, std.usable, lam, beta, MAX_SWEEPS - used, tol)
        used += sweeps
        if not converged:
            raise NumericalError(
                f'Lasso coordinate descent did not converge at lambda={lam:.6g} after {used} sweeps', iterations=used
            )
        if _standardized_kkt(std.gram, std.corr, std.usable, beta, lam) <= KKT_TOL:
            return used
        if used >= MAX_SWEEPS:
            raise NumericalError(f'Lasso KKT conditions not met at lambda={lam:.6g}', iterations=used)
        tol *= 1e-2


def _standardized_kkt(gram, corr, usable, beta, lam) -> float:
    grad = corr - gram @ beta
    active = beta != 0.0
    violation = np.where(active, np.abs(grad - lam * np.sign(beta)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(np.max(np.where(usable, violation, 0.0), initial=0.0))


def kkt_violation(model: LinearModel, x: NDArray[np.float64], y: NDArray[np.float64]) -> float:
    """Largest violation of the lasso stationarity conditions on standardized columns.

    `|z_j'(y - ŷ)/n| ≤ λ` for zero coefficients and `z_j'(y - ŷ)/n = λ·sgn(β_j)` for nonzero ones,
    with `y` on the transform scale.
    """
    target = np.log(y) if model.transform == 'log_exp' else y
    residual = target - model.predict_raw(x)
    usable = model.scales > 0
    z = (x - model.means) / np.where(usable, model.scales, 1.0)
    grad = (z.T @ residual) / x.shape[0]
    beta = model.standardized_coef
    active = np.abs(grad - model.lam * np.sign(beta))
    violation = np.where(beta != 0.0, active, np.maximum(np.abs(grad) - model.lam, 0.0))
    return float(np.max(np.where(usable, violation, 0.0), initial=0.0))


def _cv_splits(n: int, penalty: CvPenalty) -> list[NDArray[np.int64]]:
    if n < penalty.folds:
        raise ConfigurationError(f'Cross-validation needs n >= folds, got n={n} and {penalty.folds} folds')
    return np.array_split(fisher_yates(n, penalty.seed), penalty.folds)


def _choose(grid: list[float], rmse: list[float]) -> float:
    best = min(rmse)
    ties = [lam for lam, err in zip(grid, rmse) if err <= best * (1.0 + 1e-12)]
    return max(ties)


@dataclass(init=False)
class _PenalizedLearner(Learner):
    penalty: Penalty

    def __init__(self, penalty: Penalty | float | None = None, *, transform: OutcomeTransform = 'none'):
        if penalty is None:
            penalty = CvPenalty()
        elif not isinstance(penalty, (FixedPenalty, CvPenalty)):
            penalty = FixedPenalty(float(penalty))
        self.penalty = penalty
        self.transform = transform

    def fit(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> LinearModel:
        x, target = self._prepare(x, y)
        with _logfire.span('fit {kind} learner', kind=self.name(), n=x.shape[0], p=x.shape[1]):
            report = None
            if isinstance(self.penalty, CvPenalty):
                report = self._cv(x, target, self.penalty)
                lam = report.chosen
            else:
                lam = self.penalty.lam
            return self._fit_at(x, target, lam, report)

    def cv_tune(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> CvReport:
        if not isinstance(self.penalty, CvPenalty):
            raise ConfigurationError(f'{self.name()} learner has a fixed penalty; use a CV penalty to tune it')
        x, target = self._prepare(x, y)
        return self._cv(x, target, self.penalty)

    def _cv(self, x: NDArray[np.float64], target: NDArray[np.float64], penalty: CvPenalty) -> CvReport:
        grid = sorted(penalty.grid if penalty.grid is not None else default_grid(x, target), reverse=True)
        splits = _cv_splits(x.shape[0], penalty)
        with _logfire.span('cross-validate {kind} penalty', kind=self.name(), grid_size=len(grid), folds=penalty.folds):
            sse = np.zeros(len(grid))
            for held_out in splits:
                train = np.setdiff1d(np.arange(x.shape[0]), held_out, assume_unique=True)
                std = _standardize(x[train], target[train])
                for g, prediction in enumerate(self._path_predictions(std, grid, x[held_out])):
                    residual = target[held_out] - prediction
                    sse[g] += float(residual @ residual)
            rmse = np.sqrt(sse / x.shape[0]).tolist()
        if not all(math.isfinite(err) for err in rmse):
            raise NumericalError(f'Non-finite cross-validated RMSE for the {self.name()} learner')
        return CvReport(grid=grid, rmse=rmse, chosen=_choose(grid, rmse), folds=penalty.folds)

    def name(self) -> str:
        raise NotImplementedError()

    def summary(self) -> dict[str, Any]:
        mode = 'fixed' if isinstance(self.penalty, FixedPenalty) else 'cv'
        return {'kind': self.name(), 'transform': self.transform, 'penalty': mode}

    def _fit_at(self, x, target, lam: float, report: CvReport | None) -> LinearModel:
        raise NotImplementedError()

    def _path_predictions(self, std: _Standardized, grid: list[float], x_new: NDArray[np.float64]):
        raise NotImplementedError()


class RidgeLearner(_PenalizedLearner):
    """Ridge regression solved through an eigendecomposition of `Z'Z/n`, reused along the penalty grid."""

    def name(self) -> str:
        return 'ridge'

    @staticmethod
    def _eigen(std: _Standardized) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.int64]]:
        cols = np.flatnonzero(std.usable)
        values, vectors = linalg.eigh(std.gram[np.ix_(cols, cols)])
        return values, vectors, cols

    @staticmethod
    def _solve(std, values, vectors, cols, lam: float) -> NDArray[np.float64]:
        beta = np.zeros(std.gram.shape[0])
        if cols.size == 0:
            return beta
        shifted = values + lam
        if shifted.min() <= 1e-12 * max(float(values.max()), 1.0):
            raise NumericalError(
                f'Ridge system is singular at lambda={lam:.6g} (collinear columns); use lambda > 0'
            )
        beta[cols] = vectors @ ((vectors.T @ std.corr[cols]) / shifted)
        return beta

    def _fit_at(self, x, target, lam, report):
        std = _standardize(x, target)
        values, vectors, cols = self._eigen(std)
        beta = self._solve(std, values, vectors, cols, lam)
        return _to_model('ridge', std, beta, lam, self.transform, cv=report)

    def _path_predictions(self, std, grid, x_new):
        values, vectors, cols = self._eigen(std)
        for lam in grid:
            model = _to_model('ridge', std, self._solve(std, values, vectors, cols, lam), lam, self.transform)
            yield model.predict_raw(x_new)


class LassoLearner(_PenalizedLearner):
    """Lasso by cyclic coordinate descent with soft-thresholding, warm-started down the penalty grid."""

    def name(self) -> str:
        return 'lasso'

    def _fit_at(self, x, target, lam, report):
        std = _standardize(x, target)
        beta = np.zeros(x.shape[1])
        sweeps = _lasso_solve(std, lam, beta)
        return _to_model('lasso', std, beta, lam, self.transform, cv=report, sweeps=sweeps)

    def _path_predictions(self, std, grid, x_new):
        beta = np.zeros(std.gram.shape[0])
        for lam in grid:
            _lasso_solve(std, lam, beta)
            yield _to_model('lasso', std, beta.copy(), lam, self.transform).predict_raw(x_new)
