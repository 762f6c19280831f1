from __future__ import annotations as _annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from debiased_iop.crossfit import FoldPartition, make_folds, make_pair_blocks
from debiased_iop.exceptions import NumericalError, UsageError
from debiased_iop.ustat import (
    FunctionKernel,
    LooSums,
    block_sum,
    degeneracy_diagnostic,
    hajek_projection,
    loo_means,
    sigma_hat,
    symmetrize,
    u_mean,
    u_sum,
)

Y3 = np.array([1.0, 2.0, 3.0])


def test_u_mean_examples():
    assert u_mean(FunctionKernel(lambda i, j: 2.5), 7) == pytest.approx(2.5)
    assert u_mean(FunctionKernel(lambda i, j: np.abs(Y3[i] - Y3[j])), 3) == pytest.approx(4 / 3)
    assert u_mean(FunctionKernel(lambda i, j: Y3[i] + Y3[j]), 3) == pytest.approx(4.0)


def test_u_mean_needs_two_observations():
    with pytest.raises(UsageError):
        u_mean(FunctionKernel(lambda i, j: 1.0), 1)


def test_u_mean_names_non_finite_pair():
    y = np.array([1.0, 0.0, 2.0, 0.0])
    with pytest.raises(NumericalError, match=r'\(1, 3\)'):
        u_mean(FunctionKernel(lambda i, j: np.log(y[i] + y[j])), 4)


def test_loo_means_examples():
    assert_allclose(loo_means(FunctionKernel(lambda i, j: 1.0), 5).means, np.ones(5))
    assert_allclose(loo_means(FunctionKernel(lambda i, j: Y3[i] + Y3[j]), 3).means, [3.5, 4.0, 4.5])


def test_loo_means_of_symmetrized_kernel():
    kernel = FunctionKernel(lambda i, j: Y3[i] - 2.0 * Y3[j], symmetric=False)
    sym = symmetrize(kernel)
    assert sym.symmetric
    # (k(i,j) + k(j,i)) / 2 = -(y_i + y_j) / 2
    assert_allclose(loo_means(sym, 3).means, [-1.75, -2.0, -2.25])
    assert symmetrize(sym) is sym


def test_loo_mean_matches_u_mean():
    rng = np.random.default_rng(2)
    y = rng.standard_normal(57)
    kernel = FunctionKernel(lambda i, j: (y[i] - y[j]) ** 2 + y[i] * y[j])
    assert loo_means(kernel, 57).mean() == pytest.approx(u_mean(kernel, 57), rel=1e-12)


def test_parallel_reduction_matches_sequential():
    rng = np.random.default_rng(8)
    y = rng.lognormal(size=301)
    kernel = FunctionKernel(lambda i, j: np.abs(y[i] - y[j]))
    sequential = u_sum(kernel, 301, chunk_elements=1000)
    parallel = u_sum(kernel, 301, n_jobs=4, chunk_elements=1000)
    assert parallel == pytest.approx(sequential, rel=1e-12)
    assert_allclose(
        loo_means(kernel, 301, n_jobs=3, chunk_elements=500).means,
        loo_means(kernel, 301).means,
        rtol=1e-12,
    )


def test_block_sums_add_up_to_u_sum():
    rng = np.random.default_rng(4)
    y = rng.standard_normal(29)
    kernel = FunctionKernel(lambda i, j: np.abs(y[i] - y[j]) * (y[i] + y[j] + 2.0))
    blocks = make_pair_blocks(make_folds(29, 4, seed=3))
    total = math.fsum(block_sum(kernel, block, chunk_elements=37) for block in blocks)
    assert total == pytest.approx(u_sum(kernel, 29), rel=1e-12)


def test_block_sum_uses_lower_index_first_for_asymmetric_kernels():
    y = np.array([0.0, 10.0, 20.0, 30.0])
    kernel = FunctionKernel(lambda i, j: y[i] - 2.0 * y[j], symmetric=False)
    folds = FoldPartition(assignment=np.array([1, 0, 1, 0]), K=2, seed=0)
    cross = make_pair_blocks(folds)[2]
    expected = sum(y[i] - 2.0 * y[j] for i, j in cross.pairs().tolist())
    assert block_sum(kernel, cross) == pytest.approx(expected)


def test_vector_kernel():
    kernel = FunctionKernel(lambda i, j: np.stack(np.broadcast_arrays(Y3[i] + Y3[j], Y3[i] * Y3[j]), axis=-1))
    assert_allclose(u_mean(kernel, 3), [4.0, 11 / 3])
    loo = loo_means(kernel, 3)
    assert loo.means.shape == (3, 2)
    assert np.shape(sigma_hat(loo)) == (2, 2)


def test_sigma_hat_examples():
    assert sigma_hat(loo_means(FunctionKernel(lambda i, j: 0.0), 4)) == 0.0

    y2 = np.array([0.0, 2.0])
    psi2 = FunctionKernel(lambda i, j: y2[i] + y2[j] - 2.0 * y2.mean())
    assert sigma_hat(loo_means(psi2, 2), 2) == pytest.approx(0.0)

    psi3 = FunctionKernel(lambda i, j: Y3[i] + Y3[j] - 2.0 * Y3.mean())
    assert sigma_hat(loo_means(psi3, 3), 3) == pytest.approx(2 / 3)


def test_sigma_hat_length_check():
    with pytest.raises(UsageError):
        sigma_hat(LooSums(means=np.zeros(4)), 5)


def test_degeneracy_diagnostic():
    assert degeneracy_diagnostic(0.0, 1.0)
    assert not degeneracy_diagnostic(1.0, 1.0)
    assert degeneracy_diagnostic(1e-9, 100.0)
    assert degeneracy_diagnostic(np.diag([1.0, 0.0]), 1.0)


def test_degenerate_kernel_has_zero_conditional_mean():
    # ξ(w_i, w_j) = (μ - γ(x_j))(y_i - γ(x_i)) - (μ - γ(x_i))(y_j - γ(x_j)) with γ(x) = 1 + x, μ = 1
    rng = np.random.default_rng(12)
    n = 10_001
    x = rng.standard_normal(n)
    y = 1.0 + x + rng.standard_normal(n)
    gamma = 1.0 + x
    mu = 1.0
    kernel = FunctionKernel(lambda i, j: (mu - gamma[j]) * (y[i] - gamma[i]) - (mu - gamma[i]) * (y[j] - gamma[j]))
    for i in range(3):
        values = kernel.evaluate(np.array([i]), np.arange(3, n))[0]
        assert abs(values.mean()) <= 3.0 * values.std(ddof=1) / math.sqrt(values.size)


def test_hajek_projection():
    rng = np.random.default_rng(6)
    y = rng.standard_normal(80)
    projection = hajek_projection(FunctionKernel(lambda i, j: 0.5 * (y[i] - y[j]) ** 2), 80)
    assert projection.theta == pytest.approx(np.var(y, ddof=1), rel=1e-12)
    assert projection.h1.mean() == pytest.approx(0.0, abs=1e-12)
    assert projection.variance > 0.0
