from __future__ import annotations as _annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import stats

__all__ = (
    'SplitMix64',
    'derive_seed',
    'fisher_yates',
    'stable_sum',
    'sgn',
    'normal_quantile',
    'as_float_array',
    'n_choose_2',
)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass
class SplitMix64:
    """64-bit SplitMix generator.

    Used wherever a random stream has to be reproducible across platforms and library versions:
    fold shuffles and per-replication seed derivation.
    """

    state: int

    def __post_init__(self) -> None:
        self.state &= _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in `[0, bound)` without modulo bias."""
        if bound <= 0:
            raise ValueError('bound must be positive')
        threshold = ((1 << 64) - bound) % bound
        while True:
            r = self.next_u64()
            if r >= threshold:
                return r % bound


def derive_seed(seed: int, *path: int) -> int:
    """Derive an independent 63-bit seed from a parent seed and a path of indices."""
    state = seed & _MASK64
    for index in path:
        state = SplitMix64(state ^ ((index + 1) * _GOLDEN & _MASK64)).next_u64()
    return state & ((1 << 63) - 1)


def fisher_yates(n: int, seed: int) -> NDArray[np.int64]:
    """Permutation of `range(n)` from a Fisher–Yates shuffle driven by `SplitMix64(seed)`."""
    perm = list(range(n))
    gen = SplitMix64(seed)
    for i in range(n - 1, 0, -1):
        j = gen.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return np.asarray(perm, dtype=np.int64)


def stable_sum(parts: Iterable[float]) -> float:
    """Correctly rounded sum of partial sums, independent of how they were grouped in time."""
    return math.fsum(parts)


def sgn(values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Sign with `sgn(0) = 0`."""
    return np.sign(values)


def normal_quantile(level: float) -> float:
    """Two-sided standard normal critical value for a confidence level."""
    return float(stats.norm.ppf(0.5 + level / 2.0))


def as_float_array(values: object, ndim: int, name: str) -> NDArray[np.float64]:
    from .exceptions import UsageError

    array = np.asarray(values, dtype=np.float64)
    if ndim == 2 and array.ndim == 1:
        array = array.reshape(-1, 1)
    if array.ndim != ndim:
        raise UsageError(f'{name} must be {ndim}-dimensional, got shape {array.shape}')
    return array


def n_choose_2(n: int) -> int:
    return n * (n - 1) // 2
