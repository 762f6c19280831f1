from __future__ import annotations as _annotations

import itertools

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from debiased_iop._utils import SplitMix64, derive_seed, fisher_yates
from debiased_iop.crossfit import FoldPartition, kappa_counts, make_folds, make_pair_blocks, training_indices
from debiased_iop.exceptions import ConfigurationError, UsageError


def _fixed_folds(assignment: list[int]) -> FoldPartition:
    return FoldPartition(assignment=np.array(assignment, dtype=np.int64), K=max(assignment) + 1, seed=0)


def test_make_folds_balanced():
    assert make_folds(21, 3, seed=7).sizes == [7, 7, 7]
    assert sorted(make_folds(10, 3, seed=123).sizes, reverse=True) == [4, 3, 3]
    for n, K in [(11, 4), (97, 5), (30, 7)]:
        sizes = make_folds(n, K).sizes
        assert sum(sizes) == n
        assert max(sizes) - min(sizes) <= 1
        assert min(sizes) > 0


def test_make_folds_errors():
    with pytest.raises(ConfigurationError):
        make_folds(5, 6)
    with pytest.raises(ConfigurationError, match='at least 2'):
        make_folds(5, 1)


def test_make_folds_deterministic():
    first = make_folds(50, 5, seed=9)
    assert_array_equal(first.assignment, make_folds(50, 5, seed=9).assignment)
    assert not np.array_equal(first.assignment, make_folds(50, 5, seed=10).assignment)


def test_fisher_yates_is_a_permutation():
    perm = fisher_yates(100, 4)
    assert sorted(perm.tolist()) == list(range(100))
    assert_array_equal(perm, fisher_yates(100, 4))


def test_splitmix_reference_values():
    # reference outputs of SplitMix64 seeded with 0
    gen = SplitMix64(0)
    assert gen.next_u64() == 0xE220A8397B1DCDAF
    assert gen.next_u64() == 0x6E789E6AA1B965F4


def test_derive_seed_depends_on_path():
    seeds = {derive_seed(42, rep, stream) for rep in range(20) for stream in range(2)}
    assert len(seeds) == 40
    assert derive_seed(42, 3, 1) == derive_seed(42, 3, 1)


def test_pair_blocks_n21_k3():
    blocks = make_pair_blocks(make_folds(21, 3, seed=7))
    assert blocks.L == 6
    assert [block.n_pairs for block in blocks] == [21, 21, 21, 49, 49, 49]
    assert blocks.n_pairs == 210
    assert [block.folds for block in blocks] == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2)]


def test_pair_blocks_partition_all_pairs():
    folds = make_folds(23, 4, seed=1)
    blocks = make_pair_blocks(folds)
    seen: list[tuple[int, int]] = []
    for block in blocks:
        pairs = block.pairs()
        assert pairs.shape == (block.n_pairs, 2)
        assert np.all(pairs[:, 0] < pairs[:, 1])
        for i, j in pairs.tolist():
            assert {int(folds.assignment[i]), int(folds.assignment[j])} <= set(block.folds)
        seen.extend(map(tuple, pairs.tolist()))
    assert len(seen) == len(set(seen)) == 23 * 22 // 2


def test_pair_blocks_k2_enumeration():
    blocks = make_pair_blocks(_fixed_folds([0, 0, 1, 1]))
    assert [block.pairs().tolist() for block in blocks] == [
        [[0, 1]],
        [[2, 3]],
        [[0, 2], [0, 3], [1, 2], [1, 3]],
    ]


def test_pair_blocks_k5():
    assert make_pair_blocks(make_folds(40, 5)).L == 15


def test_training_indices():
    folds = make_folds(21, 3, seed=7)
    blocks = make_pair_blocks(folds)
    assert_array_equal(training_indices(blocks, 0), np.sort(np.concatenate([folds.members(1), folds.members(2)])))
    assert_array_equal(training_indices(blocks, 3), folds.members(2))
    for l in range(blocks.L):  # noqa: E741
        train = set(training_indices(blocks, l).tolist())
        assert train.isdisjoint(blocks[l].members.tolist())
        assert train


def test_training_indices_errors():
    blocks = make_pair_blocks(make_folds(10, 2))
    training_indices(blocks, 0)
    with pytest.raises(ConfigurationError, match='K >= 3'):
        training_indices(blocks, 2)
    with pytest.raises(UsageError):
        training_indices(blocks, 3)


def _brute_kappa(pairs: list[tuple[int, int]]) -> tuple[int, int]:
    kappa1 = kappa2 = 0
    for p, q in itertools.product(pairs, repeat=2):
        shared = len(set(p) & set(q))
        kappa1 += shared == 1
        kappa2 += shared == 2
    return kappa1, kappa2


def test_kappa_counts_diagonal_c7():
    blocks = make_pair_blocks(make_folds(21, 3, seed=7))
    assert kappa_counts(blocks, 0) == (210, 21)


@pytest.mark.parametrize('n', [9, 17, 30])
@pytest.mark.parametrize('K', [3, 4, 5])
def test_kappa_counts_match_enumeration(n: int, K: int):
    blocks = make_pair_blocks(make_folds(n, K, seed=n + K))
    for l in range(blocks.L):  # noqa: E741
        pairs = [tuple(pair) for pair in blocks[l].pairs().tolist()]
        assert kappa_counts(blocks, l) == _brute_kappa(pairs)


def test_kappa_counts_single_pair_block():
    blocks = make_pair_blocks(_fixed_folds([0, 0, 1, 1, 1, 2, 2, 2]))
    assert blocks[0].n_pairs == 1
    assert kappa_counts(blocks, 0) == (0, 1)


@pytest.mark.parametrize('l', [-1, 6])
def test_kappa_counts_rejects_out_of_range_block(l: int):  # noqa: E741
    blocks = make_pair_blocks(make_folds(21, 3, seed=7))
    with pytest.raises(UsageError, match='out of range 0..5'):
        kappa_counts(blocks, l)
