"""Fold partitions and the pair-block partition used for cross-fitting.

Observations are split into `K` folds. The pairs `{(i, j): i < j}` are then split into `L = K(K+1)/2` blocks:
one diagonal block of within-fold pairs per fold, and one off-diagonal block of cross-fold pairs per fold pair
`k < m`. The first step used on a block is trained on every observation outside the block's folds.
"""

from __future__ import annotations as _annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from ._utils import fisher_yates, n_choose_2
from .exceptions import ConfigurationError, UsageError
from .settings import DEFAULT_FOLDS, DEFAULT_SEED

__all__ = (
    'FoldPartition',
    'PairBlock',
    'PairBlocks',
    'make_folds',
    'make_pair_blocks',
    'training_indices',
    'kappa_counts',
)


@dataclass(frozen=True)
class FoldPartition:
    """Assignment of `n` observations to `K` folds (fold ids `0..K-1`)."""

    assignment: NDArray[np.int64]
    K: int
    seed: int

    @property
    def n(self) -> int:
        return int(self.assignment.shape[0])

    def members(self, k: int) -> NDArray[np.int64]:
        """Sorted indices of fold `k`."""
        return np.flatnonzero(self.assignment == k)

    @property
    def sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.K).tolist()


def make_folds(n: int, K: int = DEFAULT_FOLDS, seed: int = DEFAULT_SEED) -> FoldPartition:
    """Shuffle `range(n)` and cut it into `K` folds whose sizes differ by at most one.

    The shuffle is a Fisher–Yates pass driven by a SplitMix64 stream, so the assignment only depends on
    `(n, K, seed)`.

    Raises:
        ConfigurationError: `K < 2` or `K > n`.
    """
    if K < 2:
        raise ConfigurationError(f'K must be at least 2 (a single fold leaves no held-out training data), got {K}')
    if K > n:
        raise ConfigurationError(f'K={K} exceeds the number of observations n={n}')
    perm = fisher_yates(n, seed)
    assignment = np.empty(n, dtype=np.int64)
    for k, chunk in enumerate(np.array_split(perm, K)):
        assignment[chunk] = k
    assignment.setflags(write=False)
    return FoldPartition(assignment=assignment, K=K, seed=seed)


@dataclass(frozen=True)
class PairBlock:
    """One block `I_l` of the pair partition.

    Pairs are not stored: a diagonal block is every within-fold pair of `first`, an off-diagonal block is
    `first × second`.
    """

    index: int
    folds: tuple[int, ...]
    first: NDArray[np.int64]
    second: NDArray[np.int64] | None = None

    @property
    def diagonal(self) -> bool:
        return self.second is None

    @property
    def n_pairs(self) -> int:
        if self.second is None:
            return n_choose_2(self.first.size)
        return int(self.first.size * self.second.size)

    @property
    def members(self) -> NDArray[np.int64]:
        """Sorted indices of every observation appearing in the block."""
        if self.second is None:
            return self.first
        return np.union1d(self.first, self.second)

    def pairs(self) -> NDArray[np.int64]:
        """Materialize the block as an `(n_pairs, 2)` array of `(i, j)`, `i < j`, in lexicographic order."""
        if self.second is None:
            i, j = np.triu_indices(self.first.size, k=1)
            out = np.column_stack([self.first[i], self.first[j]])
        else:
            a = np.repeat(self.first, self.second.size)
            b = np.tile(self.second, self.first.size)
            out = np.column_stack([np.minimum(a, b), np.maximum(a, b)])
        order = np.lexsort((out[:, 1], out[:, 0]))
        return out[order]


@dataclass(frozen=True)
class PairBlocks:
    """The `L = K(K+1)/2` blocks: diagonal blocks `0..K-1` first, then off-diagonal blocks in `(k, m)` order."""

    folds: FoldPartition
    blocks: tuple[PairBlock, ...]
    _training: dict[int, NDArray[np.int64]] = field(default_factory=dict, repr=False, compare=False)

    @property
    def L(self) -> int:
        return len(self.blocks)

    @cached_property
    def n_pairs(self) -> int:
        return sum(block.n_pairs for block in self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __getitem__(self, l: int) -> PairBlock:  # noqa: E741
        return self.blocks[l]


def make_pair_blocks(folds: FoldPartition) -> PairBlocks:
    """Build the pair-block partition of a fold partition."""
    members = [folds.members(k) for k in range(folds.K)]
    blocks: list[PairBlock] = []
    for k in range(folds.K):
        blocks.append(PairBlock(index=len(blocks), folds=(k,), first=members[k]))
    for k in range(folds.K):
        for m in range(k + 1, folds.K):
            blocks.append(PairBlock(index=len(blocks), folds=(k, m), first=members[k], second=members[m]))
    return PairBlocks(folds=folds, blocks=tuple(blocks))


def _check_block(blocks: PairBlocks, l: int) -> None:  # noqa: E741
    if not 0 <= l < blocks.L:
        raise UsageError(f'Block index {l} out of range 0..{blocks.L - 1}')


def training_indices(blocks: PairBlocks, l: int) -> NDArray[np.int64]:  # noqa: E741
    """Observations whose fold is not used by block `l`; the first step for the block is trained on them.

    Raises:
        ConfigurationError: The training set is empty, which happens for the off-diagonal block when `K = 2`.
    """
    _check_block(blocks, l)
    cached = blocks._training.get(l)
    if cached is not None:
        return cached
    block = blocks[l]
    train = np.flatnonzero(~np.isin(blocks.folds.assignment, block.folds))
    if train.size == 0:
        raise ConfigurationError(
            f'Block {l} (folds {", ".join(str(k + 1) for k in block.folds)}) has no training observations; use K >= 3'
        )
    train.setflags(write=False)
    blocks._training[l] = train
    return train


def kappa_counts(blocks: PairBlocks, l: int) -> tuple[int, int]:  # noqa: E741
    """Count ordered pairs-of-pairs `(p, q)` in block `l` that share exactly one or exactly two indices.

    `kappa2` counts a pair chosen together with itself, so it equals the number of pairs in the block.

    Returns:
        `(kappa1, kappa2)`.

    Raises:
        UsageError: `l` is not a block index.
    """
    _check_block(blocks, l)
    block = blocks[l]
    if block.second is None:
        c = block.first.size
        pairs = n_choose_2(c)
        return pairs * 2 * max(c - 2, 0), pairs
    a, b = block.first.size, block.second.size
    return a * b * (a + b - 2), a * b
