from __future__ import annotations as _annotations

import numpy as np
import pytest

from debiased_iop.data import Dataset, design_matrix
from debiased_iop.estimators import MAX_SLOPE_RATIO, orthogonality_check
from debiased_iop.exceptions import ConfigurationError
from debiased_iop.learners.linear import RidgeLearner
from debiased_iop.simulate import gen_bernoulli_labels, gen_linear_gaussian


def _ols(data: Dataset):
    return RidgeLearner(0.0).fit(design_matrix(data), data.y)


def test_varfv_moment_is_insensitive_along_fitted_values():
    data, _ = gen_linear_gaussian(500, seed=3)
    gamma = _ols(data)
    report = orthogonality_check('varfv', data, gamma, gamma.predict)
    assert report.passed
    assert report.max_ratio <= MAX_SLOPE_RATIO
    # slope(g) = 2 Var(γ̂) along γ̂ itself
    assert report.g_slopes[0] == pytest.approx(2.0 * np.var(gamma.predict(data.x), ddof=1), rel=1e-6)
    assert abs(report.psi_slopes[0]) < 1e-8


def test_iop_moment_is_insensitive_to_first_step():
    rng = np.random.default_rng(17)
    n = 400
    x = rng.standard_normal((n, 2))
    y = 10.0 + x[:, 0] - 0.5 * x[:, 1] + 0.1 * rng.standard_normal(n)
    data = Dataset(y=y, x=x)
    report = orthogonality_check('iop', data, _ols(data), lambda design: design[:, 0])
    assert report.eps_grid == [1e-2, 1e-3]
    assert all(abs(slope) > 0.5 for slope in report.g_slopes)
    assert report.passed


def test_ranking_check_runs():
    data = gen_bernoulli_labels(150, p=0.3, seed=2)
    report = orthogonality_check('ranking', data, _ols(data), lambda design: design[:, 0], eps_grid=[1e-2])
    assert len(report.ratios) == 1
    assert np.isfinite(report.theta)


def test_constant_direction_is_a_degenerate_probe():
    data, _ = gen_linear_gaussian(60, seed=1)
    report = orthogonality_check('varfv', data, _ols(data), lambda design: np.ones(design.shape[0]))
    assert report.g_slopes == pytest.approx([0.0, 0.0], abs=1e-9)
    assert report.psi_slopes == pytest.approx([0.0, 0.0], abs=1e-9)


def test_fixed_theta_is_used():
    data, _ = gen_linear_gaussian(60, seed=1)
    report = orthogonality_check('varfv', data, _ols(data), lambda design: design[:, 1], theta=0.25)
    assert report.theta == 0.25


def test_orthogonality_check_errors():
    data, _ = gen_linear_gaussian(30, seed=0)
    gamma = _ols(data)
    with pytest.raises(ConfigurationError):
        orthogonality_check('contrast', data, gamma, gamma.predict)  # pyright: ignore[reportArgumentType]
    with pytest.raises(ConfigurationError):
        orthogonality_check('varfv', data, gamma, gamma.predict, eps_grid=())
    with pytest.raises(ConfigurationError):
        orthogonality_check('varfv', data, gamma, gamma.predict, eps_grid=[1e-2, -1e-3])
