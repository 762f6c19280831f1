"""Pairwise kernel averages and the U-statistic variance machinery.

Kernels are evaluated lazily on index blocks, never on a materialized `n × n` matrix. Every reduction sums
fixed row chunks with numpy and folds the chunk totals with a correctly rounded sum in chunk order, so the
result does not depend on the number of worker threads.
"""

from __future__ import annotations as _annotations

import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import logfire_api
import numpy as np
from joblib import Parallel, delayed
from numpy.typing import NDArray

from ._utils import n_choose_2
from .crossfit import PairBlock
from .exceptions import NumericalError, UsageError
from .settings import DEFAULT_ESTIMATOR_SETTINGS

__all__ = (
    'PairKernel',
    'FunctionKernel',
    'SymmetrizedKernel',
    'symmetrize',
    'LooSums',
    'HajekProjection',
    'u_sum',
    'u_mean',
    'block_sum',
    'loo_means',
    'sigma_hat',
    'degeneracy_diagnostic',
    'hajek_projection',
)

_logfire = logfire_api.Logfire(otel_scope='debiased-iop')

KernelValues = NDArray[np.float64]
"""Kernel values on an index grid: shape `(r, c)` for scalar kernels, `(r, c, k)` for vector kernels."""

_DEFAULT_CHUNK = DEFAULT_ESTIMATOR_SETTINGS['chunk_elements']


class PairKernel(ABC):
    """A pair function `k(i, j)` of observation indices."""

    symmetric: bool = True
    """Whether `k(i, j) = k(j, i)`."""

    @abstractmethod
    def evaluate(self, rows: NDArray[np.int64], cols: NDArray[np.int64]) -> KernelValues:
        """Evaluate `k(rows[a], cols[b])` on the whole grid."""
        raise NotImplementedError()


@dataclass(init=False)
class FunctionKernel(PairKernel):
    """A kernel defined by a vectorized function of index arrays.

    The function receives `i` with shape `(r, 1)` and `j` with shape `(1, c)` and must return values that
    broadcast to `(r, c)` or `(r, c, k)`, e.g. `lambda i, j: np.abs(y[i] - y[j])`.
    """

    function: Callable[[NDArray[np.int64], NDArray[np.int64]], NDArray[np.float64]]

    def __init__(
        self,
        function: Callable[[NDArray[np.int64], NDArray[np.int64]], NDArray[np.float64]],
        *,
        symmetric: bool = True,
    ):
        self.function = function
        self.symmetric = symmetric

    def evaluate(self, rows: NDArray[np.int64], cols: NDArray[np.int64]) -> KernelValues:
        values = np.asarray(self.function(rows[:, None], cols[None, :]), dtype=np.float64)
        shape = (rows.size, cols.size)
        if values.ndim >= 2 and values.shape[:2] == shape:
            return values
        if values.ndim == 3:
            return np.broadcast_to(values, (*shape, values.shape[2]))
        return np.broadcast_to(values, shape)


@dataclass
class SymmetrizedKernel(PairKernel):
    """`(k(i, j) + k(j, i)) / 2`."""

    kernel: PairKernel

    symmetric = True

    def evaluate(self, rows: NDArray[np.int64], cols: NDArray[np.int64]) -> KernelValues:
        forward = self.kernel.evaluate(rows, cols)
        backward = np.swapaxes(self.kernel.evaluate(cols, rows), 0, 1)
        return 0.5 * (forward + backward)


def symmetrize(kernel: PairKernel) -> PairKernel:
    """Replace a kernel by its symmetrization; symmetric kernels are returned unchanged."""
    return kernel if kernel.symmetric else SymmetrizedKernel(kernel)


@dataclass
class LooSums:
    """Leave-one-out means `s_i = (n-1)^{-1} Σ_{j≠i} k(i, j)`."""

    means: NDArray[np.float64]
    """Shape `(n,)` or `(n, k)` for vector kernels."""

    @property
    def n(self) -> int:
        return int(self.means.shape[0])

    @property
    def sums(self) -> NDArray[np.float64]:
        return self.means * (self.n - 1)

    def mean(self) -> float | NDArray[np.float64]:
        value = _fsum_rows(self.means) / self.n
        return float(value) if np.ndim(value) == 0 else value


def _fsum_rows(values: NDArray[np.float64]) -> NDArray[np.float64] | float:
    if values.ndim == 1:
        return math.fsum(values.tolist())
    return np.array([math.fsum(column.tolist()) for column in values.T])


def _row_chunks(start: int, stop: int, width: int, chunk_elements: int) -> list[tuple[int, int]]:
    step = max(1, chunk_elements // max(width, 1))
    return [(a, min(a + step, stop)) for a in range(start, stop, step)]


def _raise_non_finite(values: KernelValues, rows: NDArray[np.int64], cols: NDArray[np.int64], mask=None) -> None:
    bad = ~np.isfinite(values)
    if bad.ndim == 3:
        bad = bad.any(axis=2)
    if mask is not None:
        bad &= mask
    if bad.any():
        a, b = np.argwhere(bad)[0]
        raise NumericalError(f'Non-finite kernel value at pair ({int(rows[a])}, {int(cols[b])})')


def _upper_chunk_sum(kernel: PairKernel, n: int, a: int, b: int) -> NDArray[np.float64] | float:
    rows = np.arange(a, b)
    cols = np.arange(a + 1, n)
    if cols.size == 0:
        return 0.0
    values = kernel.evaluate(rows, cols)
    mask = cols[None, :] > rows[:, None]
    _raise_non_finite(values, rows, cols, mask)
    picked = values[mask]
    return picked.sum(axis=0)


def _fold(parts: Sequence[NDArray[np.float64] | float]) -> float | NDArray[np.float64]:
    stacked = np.array([np.asarray(part, dtype=np.float64) for part in parts])
    value = _fsum_rows(stacked)
    return float(value) if np.ndim(value) == 0 else value


def u_sum(
    kernel: PairKernel, n: int, *, n_jobs: int = 1, chunk_elements: int = _DEFAULT_CHUNK
) -> float | NDArray[np.float64]:
    """`Σ_{i<j} k(i, j)`."""
    if n < 2:
        raise UsageError(f'A U-statistic needs n >= 2, got {n}')
    chunks = _row_chunks(0, n - 1, n, chunk_elements)
    if n_jobs > 1 and len(chunks) > 1:
        parts = Parallel(n_jobs=n_jobs, prefer='threads')(
            delayed(_upper_chunk_sum)(kernel, n, a, b) for a, b in chunks
        )
    else:
        parts = [_upper_chunk_sum(kernel, n, a, b) for a, b in chunks]
    return _fold(parts)


def u_mean(
    kernel: PairKernel, n: int, *, n_jobs: int = 1, chunk_elements: int = _DEFAULT_CHUNK
) -> float | NDArray[np.float64]:
    """`C(n, 2)^{-1} Σ_{i<j} k(i, j)`.

    Raises:
        NumericalError: A kernel value is not finite; the message names the pair.
    """
    with _logfire.span('u-statistic mean over {n} observations', n=n):
        return u_sum(kernel, n, n_jobs=n_jobs, chunk_elements=chunk_elements) / n_choose_2(n)


def block_sum(
    kernel: PairKernel, block: PairBlock, *, chunk_elements: int = _DEFAULT_CHUNK
) -> float | NDArray[np.float64]:
    """`Σ_{(i,j) ∈ I_l} k(i, j)` over one cross-fitting block, each pair taken with `i < j`."""
    parts: list[NDArray[np.float64] | float] = []
    first = block.first
    if block.second is None:
        for a, b in _row_chunks(0, first.size, first.size, chunk_elements):
            rows = first[a:b]
            cols = first[a + 1 :]
            if cols.size == 0:
                continue
            values = kernel.evaluate(rows, cols)
            mask = np.arange(a + 1, first.size)[None, :] > np.arange(a, b)[:, None]
            _raise_non_finite(values, rows, cols, mask)
            parts.append(values[mask].sum(axis=0))
    else:
        second = block.second
        for a, b in _row_chunks(0, first.size, second.size, chunk_elements):
            rows = first[a:b]
            values = kernel.evaluate(rows, second)
            if not kernel.symmetric:
                flipped = rows[:, None] > second[None, :]
                if flipped.any():
                    swapped = np.swapaxes(kernel.evaluate(second, rows), 0, 1)
                    cond = flipped if values.ndim == 2 else flipped[:, :, None]
                    values = np.where(cond, swapped, values)
            _raise_non_finite(values, rows, second)
            parts.append(values.sum(axis=(0, 1)))
    if not parts:
        return 0.0
    return _fold(parts)


def _loo_chunk(kernel: PairKernel, n: int, a: int, b: int) -> NDArray[np.float64]:
    rows = np.arange(a, b)
    cols = np.arange(n)
    values = np.array(kernel.evaluate(rows, cols), dtype=np.float64)
    values[np.arange(b - a), rows] = 0.0
    _raise_non_finite(values, rows, cols)
    return values.sum(axis=1)


def loo_means(
    kernel: PairKernel, n: int, *, n_jobs: int = 1, chunk_elements: int = _DEFAULT_CHUNK
) -> LooSums:
    """Leave-one-out means `s_i = (n-1)^{-1} Σ_{j≠i} k(i, j)` for every observation."""
    if n < 2:
        raise UsageError(f'Leave-one-out means need n >= 2, got {n}')
    chunks = _row_chunks(0, n, n, chunk_elements)
    if n_jobs > 1 and len(chunks) > 1:
        parts = Parallel(n_jobs=n_jobs, prefer='threads')(delayed(_loo_chunk)(kernel, n, a, b) for a, b in chunks)
    else:
        parts = [_loo_chunk(kernel, n, a, b) for a, b in chunks]
    return LooSums(means=np.concatenate(parts, axis=0) / (n - 1))


def sigma_hat(psi_loo: LooSums, n: int | None = None) -> float | NDArray[np.float64]:
    """`Σ̂ = 4 / (n (n-1)^2) Σ_i (Σ_{j≠i} ψ_ij)(Σ_{j≠i} ψ_ij)'`, computed from the leave-one-out means of `ψ`.

    For a scalar kernel the result is a float, for a vector kernel a `k × k` matrix.
    """
    if n is not None and n != psi_loo.n:
        raise UsageError(f'LooSums has {psi_loo.n} entries, expected {n}')
    means = psi_loo.means
    if means.ndim == 1:
        return 4.0 * math.fsum((means * means).tolist()) / psi_loo.n
    return 4.0 * (means.T @ means) / psi_loo.n


def degeneracy_diagnostic(
    sigma: float | NDArray[np.float64], theta_scale: float, tol: float = DEFAULT_ESTIMATOR_SETTINGS['degeneracy_tol']
) -> bool:
    """Whether the first-order variance is numerically zero: `Σ̂ < tol · max(1, theta_scale²)`.

    For a matrix `Σ̂` the smallest eigenvalue is compared.
    """
    value = float(np.min(np.linalg.eigvalsh(sigma))) if np.ndim(sigma) == 2 else float(sigma)
    return value < tol * max(1.0, theta_scale * theta_scale)


@dataclass
class HajekProjection:
    """First-order (Hájek) decomposition of a U-statistic.

    `U - θ ≈ (2/n) Σ_i h1_i` with `h1_i` the leave-one-out mean minus the U-statistic; what remains is
    the degenerate part.
    """

    theta: float
    """The U-statistic."""
    h1: NDArray[np.float64]
    """Estimated first-order projection terms, one per observation."""
    variance: float
    """Estimated variance of `√n (U - θ)`, `4 · mean(h1²)`."""


def hajek_projection(kernel: PairKernel, n: int, *, n_jobs: int = 1) -> HajekProjection:
    """Estimate the Hájek projection of a scalar U-statistic from its leave-one-out means."""
    loo = loo_means(symmetrize(kernel), n, n_jobs=n_jobs)
    if loo.means.ndim != 1:
        raise UsageError('hajek_projection supports scalar kernels only')
    theta = float(loo.mean())
    h1 = loo.means - theta
    return HajekProjection(theta=theta, h1=h1, variance=4.0 * math.fsum((h1 * h1).tolist()) / n)
