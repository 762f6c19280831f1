from __future__ import annotations as _annotations

import warnings

import numpy as np
import pytest

from debiased_iop.crossfit import make_folds
from debiased_iop.data import Dataset, design_matrix
from debiased_iop.estimators import (
    CONTRASTS,
    AlphaModel,
    AlphaValues,
    contrast_te_debiased,
    contrast_te_plugin,
    fit_contrast_alpha,
    gini_classic,
    iop_gini_debiased_general,
    iop_gini_debiased_np,
    iop_gini_plugin,
    iop_gini_se,
    ipw_ate,
    ranking_risk_debiased,
    ranking_risk_plugin,
    sign_balance,
    varfv_debiased,
    varfv_plugin,
)
from debiased_iop.exceptions import (
    ConfigurationError,
    DegenerateKernelWarning,
    DomainError,
    InvalidInferenceWarning,
    UsageError,
)
from debiased_iop.learners import FixedPenalty, LearnerSpec, infer_learner
from debiased_iop.learners.function import FunctionLearner, MeanLearner, constant_function
from debiased_iop.learners.linear import RidgeLearner
from debiased_iop.result import EstimateResult
from debiased_iop.settings import resolve_estimator_settings
from debiased_iop.simulate import gen_bernoulli_labels, gen_randomized_treatment
from debiased_iop.ustat import FunctionKernel, u_sum


def _ordered_data(n: int = 60, seed: int = 0) -> Dataset:
    """Outcomes that are a strictly increasing function of the first covariate."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    return Dataset(y=np.exp(x[:, 0]), x=x)


def test_gini_classic_examples():
    assert gini_classic(np.array([1.0, 2.0, 3.0])) == pytest.approx(1 / 3)
    assert gini_classic(np.array([4.0, 4.0, 4.0])) == 0.0
    assert gini_classic(np.array([0.0, 0.0, 0.0, 1.0])) == pytest.approx(1.0)
    with pytest.raises(DomainError, match='nonpositive'):
        gini_classic(np.array([0.0, 0.0]))


def test_iop_plugin_is_gini_of_fitted_values(income_data):
    learner = RidgeLearner(0.5)
    with pytest.warns(InvalidInferenceWarning):
        result = iop_gini_plugin(income_data, learner)
    gamma = learner.fit(design_matrix(income_data), income_data.y).predict(design_matrix(income_data))
    assert result.theta == pytest.approx(gini_classic(gamma), rel=1e-12)
    assert result.method == 'plugin'
    assert result.diagnostics.invalid_se
    assert not result.diagnostics.crossfit
    assert result.folds is None
    assert any('invalid' in note for note in result.diagnostics.notes)


def test_iop_plugin_crossfit(income_data):
    folds = make_folds(income_data.n, 3, seed=2)
    with pytest.warns(InvalidInferenceWarning):
        result = iop_gini_plugin(income_data, RidgeLearner(0.5), folds=folds)
    assert result.diagnostics.crossfit
    assert (result.folds, result.seed) == (3, 2)
    assert 0.0 < result.theta < 1.0


def test_iop_debiased_matches_classic_gini_under_perfect_ordering():
    data = _ordered_data()
    learner = FunctionLearner(lambda design: design[:, 0], label='oracle')
    result = iop_gini_debiased_np(data, learner, make_folds(data.n, 4, seed=1))
    assert result.theta == pytest.approx(gini_classic(data.y), rel=1e-12)
    assert not result.diagnostics.negative_iop


def test_iop_debiased_reports_negative_estimates():
    data = _ordered_data()
    learner = FunctionLearner(lambda design: -design[:, 0], label='reversed')
    result = iop_gini_debiased_np(data, learner, make_folds(data.n, 4, seed=1))
    assert result.theta == pytest.approx(-gini_classic(data.y), rel=1e-12)
    assert result.diagnostics.negative_iop
    assert any('negative' in note for note in result.diagnostics.notes)


def test_iop_debiased_np(income_data):
    folds = make_folds(income_data.n, 5, seed=4)
    spec = LearnerSpec(kind='ridge', penalty=FixedPenalty(0.5))
    result = iop_gini_debiased_np(income_data, spec, folds)
    assert result.estimand == 'iop'
    assert result.method == 'debiased_np'
    assert (result.folds, result.seed) == (5, 4)
    assert 0.0 < result.theta < 1.0
    assert result.se > 0.0
    assert result.ci_low < result.theta < result.ci_high
    assert result.diagnostics.first_stage_rmse is not None and result.diagnostics.first_stage_rmse > 0.0
    assert not result.diagnostics.invalid_se


def test_pairwise_alpha_reproduces_np_form(income_data):
    folds = make_folds(income_data.n, 4, seed=8)
    np_form = iop_gini_debiased_np(income_data, 'ridge', folds)
    general = iop_gini_debiased_general(income_data, 'ridge', 'pairwise', folds)
    assert general.method == 'debiased_general'
    assert general.learner['alpha'] == 'pairwise'
    assert general.theta == pytest.approx(np_form.theta, rel=1e-12)
    assert general.se == pytest.approx(np_form.se, rel=1e-12)


def test_general_kernel_with_sign_alpha_collapses_to_signed_differences(income_data):
    design = design_matrix(income_data)
    y = income_data.y
    gamma = RidgeLearner(0.5).fit(design, y).predict(design)
    alpha = AlphaValues(kind='pairwise', gamma=gamma)

    def general(i, j):
        dg = gamma[i] - gamma[j]
        return np.abs(dg) + alpha.pair(i, j) * ((y[i] - y[j]) - dg)

    signed = FunctionKernel(lambda i, j: np.sign(gamma[i] - gamma[j]) * (y[i] - y[j]))
    total = u_sum(FunctionKernel(general), income_data.n)
    assert total == pytest.approx(u_sum(signed, income_data.n), rel=1e-12)
    assert total > 0.0


def test_iop_debiased_general_with_additive_alpha(income_data):
    folds = make_folds(income_data.n, 3, seed=6)
    alpha = LearnerSpec(kind='ridge', penalty=FixedPenalty(1.0))
    result = iop_gini_debiased_general(income_data, RidgeLearner(0.5), alpha, folds)
    assert np.isfinite(result.theta) and np.isfinite(result.se)
    assert result.learner['alpha']['kind'] == 'ridge'
    zero = iop_gini_debiased_general(income_data, RidgeLearner(0.5), 'zero', folds)
    assert zero.learner['alpha'] == 'zero'
    assert zero.theta > 0.0


def test_iop_gini_se_matches_estimator(income_data):
    spec = RidgeLearner(0.5)
    result = iop_gini_debiased_np(income_data, spec, make_folds(income_data.n, 5, seed=3))
    full = spec.fit(design_matrix(income_data), income_data.y)
    se = iop_gini_se(income_data, full, AlphaModel(kind='pairwise'), result.theta)
    assert se == pytest.approx(result.se, rel=1e-12)


def test_iop_scale_equivariance(income_data):
    folds = make_folds(income_data.n, 4, seed=5)
    scaled = Dataset(y=3.0 * income_data.y, x=income_data.x, col_meta=income_data.col_meta)
    base = iop_gini_debiased_np(income_data, RidgeLearner(0.5), folds)
    other = iop_gini_debiased_np(scaled, RidgeLearner(0.5), folds)
    assert other.theta == pytest.approx(base.theta, rel=1e-9)
    assert other.se == pytest.approx(base.se, rel=1e-9)

    v_base = varfv_debiased(income_data, RidgeLearner(0.5), folds)
    v_other = varfv_debiased(scaled, RidgeLearner(0.5), folds)
    assert v_other.theta == pytest.approx(9.0 * v_base.theta, rel=1e-9)


def test_constant_first_step_is_degenerate(income_data):
    folds = make_folds(income_data.n, 3, seed=1)
    with pytest.warns(DegenerateKernelWarning):
        result = iop_gini_debiased_np(income_data, MeanLearner(), folds)
    assert result.theta == 0.0
    assert result.se == 0.0
    assert result.diagnostics.degenerate
    assert result.diagnostics.tie_fraction == 1.0


def test_debiased_estimators_need_three_folds(income_data, treatment_data):
    folds = make_folds(income_data.n, 2)
    with pytest.raises(ConfigurationError, match='K >= 3'):
        iop_gini_debiased_np(income_data, 'ridge', folds)
    with pytest.raises(ConfigurationError, match='K >= 3'):
        varfv_debiased(income_data, 'ridge', folds)
    with pytest.raises(ConfigurationError, match='K >= 3'):
        contrast_te_debiased(treatment_data, 'difference', 'ridge', make_folds(treatment_data.n, 2))
    with pytest.raises(UsageError):
        iop_gini_debiased_np(income_data, 'ridge', make_folds(income_data.n + 1, 3))


def test_results_do_not_depend_on_thread_count(income_data):
    folds = make_folds(income_data.n, 5, seed=9)
    spec = LearnerSpec(kind='ridge', penalty=FixedPenalty(0.5))
    alpha = LearnerSpec(kind='ridge', penalty=FixedPenalty(1.0))
    for estimate in (
        lambda settings: iop_gini_debiased_np(income_data, spec, folds, settings=settings),
        lambda settings: iop_gini_debiased_general(income_data, spec, alpha, folds, settings=settings),
        lambda settings: varfv_debiased(income_data, spec, folds, settings=settings),
    ):
        single = estimate({'n_jobs': 1})
        threaded = estimate({'n_jobs': 4, 'chunk_elements': 500})
        assert threaded.theta == pytest.approx(single.theta, rel=1e-12)
        assert threaded.se == pytest.approx(single.se, rel=1e-10)


def test_estimate_result_json_round_trip(income_data):
    result = iop_gini_debiased_np(income_data, RidgeLearner(0.5), make_folds(income_data.n, 3, seed=0))
    restored = EstimateResult.from_json(result.to_json())
    assert restored == result
    assert restored.ci == result.ci
    lines = result.to_csv_row().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith('schema_version,estimand,method')


def test_confidence_level_setting(income_data):
    folds = make_folds(income_data.n, 3, seed=0)
    wide = iop_gini_debiased_np(income_data, RidgeLearner(0.5), folds, settings={'level': 0.99})
    narrow = iop_gini_debiased_np(income_data, RidgeLearner(0.5), folds, settings={'level': 0.5})
    assert wide.theta == narrow.theta
    assert wide.ci_high - wide.ci_low > narrow.ci_high - narrow.ci_low
    with pytest.raises(ConfigurationError):
        iop_gini_debiased_np(income_data, RidgeLearner(0.5), folds, settings={'level': 1.0})


def test_varfv_plugin_is_sample_variance_of_fitted_values(linear_data):
    learner = RidgeLearner(0.0)
    with pytest.warns(InvalidInferenceWarning):
        result = varfv_plugin(linear_data, learner)
    gamma = learner.fit(linear_data.x, linear_data.y).predict(linear_data.x)
    assert result.theta == pytest.approx(np.var(gamma, ddof=1), rel=1e-10)
    assert result.diagnostics.invalid_se


def test_varfv_debiased(linear_data):
    result = varfv_debiased(linear_data, RidgeLearner(0.1), make_folds(linear_data.n, 5, seed=2))
    # Var(x1 - 0.5 x2) = 1.25
    assert result.theta == pytest.approx(1.25, abs=0.6)
    assert result.se > 0.0
    assert result.method == 'debiased_np'
    with pytest.warns(DegenerateKernelWarning):
        flat = varfv_debiased(linear_data, MeanLearner(), make_folds(linear_data.n, 3))
    assert flat.theta == 0.0


def test_sign_balance():
    np.testing.assert_array_equal(sign_balance(np.array([3.0, 1.0, 2.0, 2.0])), [3.0, -3.0, 0.0, 0.0])


def test_ranking_risk_with_uninformative_scores():
    data = gen_bernoulli_labels(90, p=0.4, seed=3)
    ones = int(data.y.sum())
    expected = 0.5 * ones * (data.n - ones) / (data.n * (data.n - 1) / 2)
    constant = FunctionLearner(constant_function(0.5), label='constant')
    folds = make_folds(data.n, 3, seed=0)

    debiased = ranking_risk_debiased(data, constant, folds)
    assert debiased.theta == pytest.approx(expected, rel=1e-12)
    assert debiased.method == 'debiased_np'

    alpha = LearnerSpec(kind='ridge', penalty=FixedPenalty(1.0))
    general = ranking_risk_debiased(data, constant, folds, alpha_spec=alpha)
    assert general.method == 'debiased_general'
    assert general.theta == pytest.approx(expected, rel=1e-9)

    with pytest.warns(InvalidInferenceWarning):
        plugin = ranking_risk_plugin(data, constant)
    assert plugin.theta == pytest.approx(expected, rel=1e-12)


def test_ranking_risk_with_learned_scores():
    data = gen_bernoulli_labels(120, p=0.3, seed=7)
    result = ranking_risk_debiased(data, RidgeLearner(1.0), make_folds(data.n, 4, seed=1))
    assert 0.0 < result.theta < 0.5
    assert result.se > 0.0


def test_ranking_risk_rejects_non_binary_labels():
    data = Dataset(y=[0.0, 1.0, 2.0, 1.0], x=np.zeros((4, 1)))
    with pytest.raises(DomainError) as exc_info:
        ranking_risk_debiased(data, 'ridge', make_folds(4, 3))
    assert exc_info.value.row == 3
    with pytest.raises(DomainError):
        ranking_risk_plugin(data, 'ridge')


def test_contrast_plugin_with_constant_propensity(treatment_data):
    y, d = treatment_data.y, treatment_data.d
    n = treatment_data.n
    treated, untreated = y[d == 1.0], y[d == 0.0]
    scale = 4.0 / (n * (n - 1))
    constant = FunctionLearner(constant_function(0.5), label='propensity')

    with pytest.warns(InvalidInferenceWarning):
        difference = contrast_te_plugin(treatment_data, 'difference', constant)
    expected = scale * treated.size * untreated.size * (treated.mean() - untreated.mean())
    assert difference.theta == pytest.approx(expected, rel=1e-10)

    with pytest.warns(InvalidInferenceWarning):
        indicator = contrast_te_plugin(treatment_data, 'indicator', constant)
    wins = np.sum(treated[:, None] >= untreated[None, :])
    assert indicator.theta == pytest.approx(scale * wins, rel=1e-10)


def test_contrast_plugin_on_balanced_design_is_rescaled_horvitz_thompson():
    rng = np.random.default_rng(2)
    n = 40
    x = rng.standard_normal((n, 1))
    d = np.repeat([1.0, 0.0], n // 2)
    y = 1.0 + x[:, 0] + d + rng.standard_normal(n)
    data = Dataset(y=y, x=x, d=d)
    with pytest.warns(InvalidInferenceWarning):
        pairwise = contrast_te_plugin(data, 'difference', FunctionLearner(constant_function(0.5)))
    horvitz_thompson, _ = ipw_ate(y, d, np.full(n, 0.5))
    assert horvitz_thompson == pytest.approx(y[d == 1.0].mean() - y[d == 0.0].mean())
    assert pairwise.theta == pytest.approx(n / (n - 1) * horvitz_thompson, rel=1e-10)


def test_contrast_debiased():
    data = gen_randomized_treatment(300, seed=4, effect=1.0)
    propensity = LearnerSpec(kind='ridge', penalty=FixedPenalty(1.0))
    result = contrast_te_debiased(data, 'difference', propensity, make_folds(data.n, 3, seed=1))
    assert result.estimand == 'contrast'
    assert result.method == 'debiased_general'
    assert result.se > 0.0
    assert abs(result.theta - 1.0) < 5.0 * result.se
    assert result.learner['alpha']['kind'] == 'ridge'


def test_contrast_pairwise_alpha_matches_double_sum():
    data = gen_randomized_treatment(40, seed=9, effect=1.0)
    y, d = data.y, data.d
    assert d is not None
    propensity = FunctionLearner(constant_function(0.5))
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        folds = make_folds(data.n, 3, seed=2)
        result = contrast_te_debiased(data, 'difference', propensity, folds, alpha_spec='pairwise')
    e = 0.5
    h = y[:, None] - y[None, :]
    treated_first = d[:, None] * (1.0 - d[None, :])
    g = 0.5 * (treated_first * h + treated_first.T * h.T) / (e * (1.0 - e))
    delta = 0.5 * (treated_first.T * h.T / (e * (1.0 - e) ** 2) - treated_first * h / (e**2 * (1.0 - e)))
    residual = d - e
    psi = g + delta * residual[:, None] + delta.T * residual[None, :]
    assert result.theta == pytest.approx(psi[np.triu_indices(data.n, 1)].mean(), rel=1e-10)
    assert result.method == 'debiased_np'
    assert result.learner['alpha'] == 'pairwise'
    assert result.diagnostics.biased_correction
    assert any('biased' in note for note in result.diagnostics.notes)


def test_contrast_zero_alpha_is_crossfitted_plugin(treatment_data):
    folds = make_folds(treatment_data.n, 3, seed=5)
    propensity = LearnerSpec(kind='ridge', penalty=FixedPenalty(1.0))
    zero = contrast_te_debiased(treatment_data, 'difference', propensity, folds, alpha_spec='zero')
    with pytest.warns(InvalidInferenceWarning):
        plugin = contrast_te_plugin(treatment_data, 'difference', propensity, folds=folds)
    assert zero.theta == pytest.approx(plugin.theta, rel=1e-12)
    assert not zero.diagnostics.biased_correction


def test_contrast_projection_alpha_model(treatment_data):
    y, d, x = treatment_data.y, treatment_data.d, treatment_data.x
    assert d is not None
    e = np.full(treatment_data.n, 0.5)
    model = fit_contrast_alpha(RidgeLearner(1.0), y, d, e, x, CONTRASTS['difference'], resolve_estimator_settings(None))
    assert model.kind == 'projection'
    values = model.evaluate(e, x)
    assert values.kind == 'projection'
    assert values.first is not None and values.first.shape == (treatment_data.n,)
    with pytest.raises(UsageError):
        values.pair(np.array([0]), np.array([1]))


def test_contrast_errors(treatment_data, linear_data):
    with pytest.raises(DomainError, match='treatment column'):
        contrast_te_plugin(linear_data, 'difference', 'ridge')
    everyone = Dataset(y=treatment_data.y, x=treatment_data.x, d=np.ones(treatment_data.n))
    with pytest.raises(DomainError, match='treated'):
        contrast_te_debiased(everyone, 'difference', 'ridge', make_folds(everyone.n, 3))
    with pytest.raises(ConfigurationError, match='contrast'):
        contrast_te_plugin(treatment_data, 'ratio', 'ridge')  # pyright: ignore[reportArgumentType]


def test_ipw_ate():
    rng = np.random.default_rng(0)
    n = 200
    y = rng.standard_normal(n)
    d = (rng.uniform(size=n) < 0.5).astype(np.float64)
    e = np.full(n, 0.5)
    estimate, se = ipw_ate(y, d, e)
    assert estimate == pytest.approx(np.mean(2.0 * d * y - 2.0 * (1.0 - d) * y))
    assert se > 0.0

    # with exact outcome models and no noise the augmented estimator has no residual term
    mu0 = np.full(n, 1.0)
    mu1 = np.full(n, 3.0)
    outcome = np.where(d == 1.0, mu1, mu0)
    estimate, se = ipw_ate(outcome, d, rng.uniform(0.2, 0.8, size=n), mu0=mu0, mu1=mu1)
    assert estimate == pytest.approx(2.0)
    assert se == pytest.approx(0.0, abs=1e-12)

    with pytest.raises(DomainError):
        ipw_ate(y, d, np.ones(n))
    with pytest.raises(UsageError):
        ipw_ate(y, d[:-1], e)


def test_named_learners_resolve(income_data):
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', InvalidInferenceWarning)
        result = iop_gini_plugin(income_data, 'mean')
    assert result.learner['kind'] == infer_learner('mean').name()
