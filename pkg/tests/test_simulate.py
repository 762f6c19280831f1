from __future__ import annotations as _annotations

import os
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from debiased_iop.data import design_matrix
from debiased_iop.exceptions import ConfigurationError, DegenerateKernelWarning, DomainError, SimulationError
from debiased_iop.learners import FixedPenalty, LearnerSpec
from debiased_iop.simulate import (
    SATURATED_LEVELS,
    DgpSpec,
    McConfig,
    McReportTypeAdapter,
    default_mc_learner,
    draw,
    gen_linear_gaussian,
    gen_saturated,
    grid_records,
    harness,
    indicator_truth,
    run_grid,
    run_mc,
    run_rep,
    saturated_coefficients,
    true_gini_saturated,
    true_varfv_saturated,
    write_grid,
)

LINEAR = DgpSpec(kind='linear_gaussian')
SATURATED = DgpSpec(kind='saturated_categorical', sigma=0.1)
FAST_RIDGE = LearnerSpec(kind='ridge', penalty=FixedPenalty(0.1))


def _small_config(**changes) -> McConfig:
    config = McConfig(dgp=LINEAR, n=60, reps=4, estimand='varfv', learner=FAST_RIDGE, K=3, seed=7)
    return replace(config, **changes)


def test_saturated_coefficients_layout():
    coefficients = saturated_coefficients()
    assert coefficients.shape == (512,)
    assert coefficients[0] == 5.0
    assert coefficients[1:4].tolist() == pytest.approx([0.2, -0.2, 0.2])
    assert coefficients[21] == pytest.approx(0.2)
    assert coefficients[22] == pytest.approx(0.5)
    assert coefficients[23] == pytest.approx(0.125)
    assert coefficients[-1] == pytest.approx(1.0 / (2.0 * 490**2))


def test_true_gini_saturated():
    values = [true_gini_saturated(sigma) for sigma in (0.1, 0.2, 0.3)]
    assert values[0] == pytest.approx(0.18, abs=0.005)
    assert values[1] == pytest.approx(values[0], rel=1e-12)
    assert values[2] == pytest.approx(values[0], rel=1e-12)
    with pytest.raises(ConfigurationError):
        true_gini_saturated(0.0)
    with pytest.raises(ConfigurationError):
        true_gini_saturated(0.1, coefficients=np.ones(10))


def test_true_varfv_saturated_grows_with_noise():
    assert 0.0 < true_varfv_saturated(0.1) < true_varfv_saturated(0.3)


def test_gen_saturated():
    data = gen_saturated(200, sigma=0.1, seed=3)
    assert data.n == 200
    assert np.all(data.y > 0.0)
    assert set(np.unique(data.x).tolist()) <= set(range(SATURATED_LEVELS))
    assert all(column.kind == 'categorical' and column.levels == SATURATED_LEVELS for column in data.col_meta)
    assert design_matrix(data, interaction_order=3).shape == (200, 511)
    assert_array_equal(gen_saturated(200, sigma=0.1, seed=3).y, data.y)


def test_gen_linear_gaussian():
    data, truth = gen_linear_gaussian(300, seed=5)
    assert data.x.shape == (300, 3)
    assert truth > 0.0
    # the covariance of the covariates is tridiagonal with 0.5 off the diagonal
    assert np.corrcoef(data.x, rowvar=False)[0, 2] == pytest.approx(0.0, abs=0.2)
    with pytest.raises(ConfigurationError):
        gen_linear_gaussian(5)


def test_draw_truths():
    assert draw(DgpSpec(kind='bernoulli_labels', p=0.3), 50).truth == pytest.approx({'ranking': 0.21, 'varfv': 0.0})
    treatment = draw(DgpSpec(kind='randomized_treatment', effect=1.0), 50)
    assert treatment.data.d is not None
    assert treatment.truth['contrast:difference'] == 1.0
    assert treatment.truth['contrast:indicator'] == pytest.approx(0.691462461274013)
    assert indicator_truth(0.0) == pytest.approx(0.5)
    saturated = draw(SATURATED, 50, seed=1)
    assert saturated.truth['iop'] == pytest.approx(true_gini_saturated(0.1))


def test_dgp_spec_validation():
    with pytest.raises(ConfigurationError):
        DgpSpec(kind='saturated_categorical', sigma=0.0)
    with pytest.raises(ConfigurationError):
        DgpSpec(kind='bernoulli_labels', p=1.0)
    with pytest.raises(ConfigurationError):
        DgpSpec(kind='lognormal')  # pyright: ignore[reportArgumentType]


def test_mc_config_validation():
    with pytest.raises(ConfigurationError, match='reps'):
        _small_config(reps=0)
    with pytest.raises(ConfigurationError):
        _small_config(n=5)
    with pytest.raises(ConfigurationError, match='K >= 3'):
        _small_config(K=2)
    _small_config(K=2, estimator='plugin')
    with pytest.raises(ConfigurationError):
        _small_config(level=1.5)
    with pytest.raises(ConfigurationError, match='no known'):
        _small_config(estimand='iop')


def test_default_mc_learner():
    lasso = default_mc_learner('lasso', SATURATED)
    assert (lasso.kind, lasso.transform, lasso.interaction_order) == ('lasso', 'log_exp', 3)
    forest = default_mc_learner('rf', SATURATED)
    assert (forest.kind, forest.transform, forest.interaction_order) == ('random_forest', 'log_exp', 1)
    plain = default_mc_learner('ridge', LINEAR)
    assert (plain.transform, plain.interaction_order) == ('none', 1)
    with pytest.raises(ConfigurationError):
        default_mc_learner('boosting', LINEAR)  # pyright: ignore[reportArgumentType]


def test_run_rep_is_reproducible():
    config = _small_config()
    first = run_rep(config, 2)
    assert first == run_rep(config, 2)
    assert first != run_rep(config, 3)
    assert not first.failed
    assert first.covered is not None


def test_run_mc_summary():
    report = run_mc(_small_config())
    assert report.reps == 4
    assert report.reps_failed == 0
    assert report.successes == 4
    assert 0.0 <= report.coverage <= 1.0
    assert report.bias == pytest.approx(report.mean_estimate - report.theta_true)
    assert report.mc_se == pytest.approx(report.sd_estimates / 2.0)
    assert report.learner == 'ridge'
    restored = McReportTypeAdapter.validate_json(McReportTypeAdapter.dump_json(report))
    assert restored == report


def test_run_mc_does_not_depend_on_workers():
    config = _small_config(reps=3)
    assert run_mc(config, n_jobs=2) == run_mc(config, n_jobs=1)


def test_run_mc_fails_when_every_replication_fails():
    singular = LearnerSpec(kind='ridge', penalty=FixedPenalty(0.0), transform='log_exp', interaction_order=3)
    config = McConfig(dgp=SATURATED, n=20, reps=2, estimator='plugin', learner=singular)
    with pytest.raises(SimulationError, match='All 2 replications failed'):
        run_mc(config)


def test_run_mc_counts_domain_errors_as_failed(monkeypatch):
    estimate = harness._estimate
    calls: list[int] = []

    def first_call_fails(*args, **kwargs):
        calls.append(1)
        if len(calls) == 1:
            raise DomainError('Gini denominator nonpositive: mean outcome -0.5')
        return estimate(*args, **kwargs)

    monkeypatch.setattr(harness, '_estimate', first_call_fails)
    report = run_mc(_small_config(reps=3))
    assert report.reps_failed == 1
    assert report.successes == 2
    assert report.failures == ['rep 0: Gini denominator nonpositive: mean outcome -0.5']


def test_run_grid_and_write(tmp_path):
    reports = run_grid(_small_config(reps=2), [40, 60], estimators=('plugin', 'debiased'))
    assert [(report.estimator, report.n) for report in reports] == [
        ('plugin', 40),
        ('plugin', 60),
        ('debiased', 40),
        ('debiased', 60),
    ]
    rows = grid_records(reports)
    assert [row['n'] for row in rows] == [40, 60]
    assert set(rows[0]) == {
        'n',
        'plug-in ridge bias',
        'plug-in ridge coverage',
        'debiased ridge bias',
        'debiased ridge coverage',
    }

    csv_path, txt_path = write_grid(reports, tmp_path / 'first')
    again = write_grid(run_grid(_small_config(reps=2), [40, 60]), tmp_path / 'second')
    assert csv_path.read_bytes() == again[0].read_bytes()
    assert txt_path.read_bytes() == again[1].read_bytes()
    assert csv_path.read_text().splitlines()[0].startswith('schema_version,dgp,sigma')
    assert 'varfv on linear_gaussian' in txt_path.read_text()


def _workers() -> int:
    return os.cpu_count() or 1


@pytest.mark.slow
def test_debiased_lasso_on_saturated_design():
    report = run_mc(McConfig(dgp=SATURATED, n=3000, reps=200, learner='lasso'), n_jobs=_workers())
    assert abs(report.bias) <= 0.003
    assert 0.90 <= report.coverage <= 0.97


@pytest.mark.slow
def test_forest_on_saturated_design():
    debiased = run_mc(McConfig(dgp=SATURATED, n=1000, reps=200, learner='rf'), n_jobs=_workers())
    assert abs(debiased.bias) <= 0.005
    assert 0.89 <= debiased.coverage <= 0.97

    plugin = run_mc(McConfig(dgp=SATURATED, n=1000, reps=200, learner='rf', estimator='plugin'), n_jobs=_workers())
    assert plugin.coverage <= 0.10
    assert plugin.bias <= -0.015


@pytest.mark.slow
def test_debiasing_reduces_bias_of_variance_of_fitted_values():
    base = McConfig(dgp=LINEAR, n=1000, reps=300, learner='rf', estimand='varfv')
    debiased = run_mc(base, n_jobs=_workers())
    plugin = run_mc(replace(base, estimator='plugin'), n_jobs=_workers())
    assert abs(debiased.bias) < abs(plugin.bias)
    assert abs(plugin.bias) > 3.0 * plugin.mc_se


@pytest.mark.slow
def test_constant_regression_is_flagged_degenerate():
    from debiased_iop.crossfit import make_folds
    from debiased_iop.estimators import varfv_debiased
    from debiased_iop.simulate import gen_bernoulli_labels

    flagged = 0
    for seed in range(100):
        data = gen_bernoulli_labels(500, p=0.3, seed=seed)
        with pytest.warns(DegenerateKernelWarning):
            result = varfv_debiased(data, 'mean', make_folds(data.n, 5, seed=seed))
        flagged += result.diagnostics.degenerate
    assert flagged >= 95


@pytest.mark.slow
def test_randomized_treatment_effect_is_unbiased():
    config = McConfig(dgp=DgpSpec(kind='randomized_treatment'), n=1000, reps=200, estimand='contrast', learner='ridge')
    report = run_mc(config, n_jobs=_workers())
    assert abs(report.bias) <= 2.0 * report.mc_se


@pytest.mark.slow
def test_ranking_risk_recovers_constant_probability():
    labels = DgpSpec(kind='bernoulli_labels', p=0.3)
    config = McConfig(dgp=labels, n=2000, reps=200, estimand='ranking', learner='ridge')
    report = run_mc(config, n_jobs=_workers())
    assert report.theta_true == pytest.approx(0.21)
    assert abs(report.bias) <= 2.0 * report.mc_se
