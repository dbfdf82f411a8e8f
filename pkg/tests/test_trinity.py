import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from raoscore import core, models
from raoscore.core import Dataset
from raoscore.errors import DomainError
from raoscore.estimate import Restriction, fit_both
from raoscore.trinity import (TestResult, chi2_sf, lm_form_test, lr_test, moment_test, normal_sf,
                              one_sided_score_test, rao_score_test, trinity, wald_test)

from helpers import sample_with_mean


def _chi2_tail_by_quadrature(x, df):
    dens = lambda t: t ** (df / 2 - 1) * math.exp(-t / 2) / (2 ** (df / 2) * math.gamma(df / 2))
    body, _ = integrate.quad(dens, 0, x, limit=200)
    return 1.0 - body


@pytest.mark.parametrize("x,df", [(3.841459, 1), (5.991465, 2), (0.3, 1), (12.0, 5), (40.0, 30)])
def test_chi2_sf_against_quadrature(x, df):
    assert chi2_sf(x, df) == pytest.approx(_chi2_tail_by_quadrature(x, df), abs=1e-8)


def test_chi2_sf_anchors():
    assert abs(chi2_sf(3.841459, 1) - 0.05) < 1e-5
    assert abs(chi2_sf(5.991465, 2) - 0.05) < 1e-5
    for r in (1, 2, 7):
        assert chi2_sf(0.0, r) == 1.0


def test_chi2_sf_rejects_bad_input():
    with pytest.raises(DomainError):
        chi2_sf(-1.0, 1)
    with pytest.raises(DomainError):
        chi2_sf(1.0, 0)


def test_normal_sf():
    assert normal_sf(0.0) == 0.5
    assert normal_sf(1.959963985) == pytest.approx(0.025, abs=1e-9)


def _normal_mean(y):
    data = Dataset.from_arrays(y=y)
    model = models.NormalModel(sigma2=1.0)
    restriction = Restriction.subset([0], [0.0])
    return model, data, restriction, fit_both(model, data, restriction)


def test_normal_mean_rs_is_25():
    y = sample_with_mean(np.random.default_rng(0), 100, 0.5)
    model, data, restriction, fits = _normal_mean(y)
    assert core.score(model, data, [0.0])[0] == pytest.approx(50.0, rel=1e-12)
    res = trinity(model, data, restriction, fits)
    for key in ("RS", "Wald", "LR", "LM"):
        assert res[key].statistic == pytest.approx(25.0, rel=1e-10)
        assert res[key].df == 1


def test_multinomial_rs_is_pearson_and_lr_differs():
    counts = np.array([10.0, 20.0, 30.0, 40.0])
    model = models.MultinomialModel(4)
    data = models.multinomial_data(counts)
    restriction = Restriction.subset([0, 1, 2], [0.25] * 3)
    fits = fit_both(model, data, restriction)
    rs = rao_score_test(model, data, restriction, fits)
    assert rs.statistic == pytest.approx(20.0, rel=1e-12)
    assert rs.df == 3
    assert lm_form_test(model, data, restriction, fits).statistic == pytest.approx(20.0, rel=1e-10)
    lr = lr_test(model, data, restriction, fits).statistic
    assert lr == pytest.approx(2 * np.sum(counts * np.log(counts / 25.0)), rel=1e-9)
    assert abs(lr - 20.0) > 0.1


def test_statistics_vanish_when_restriction_holds_at_mle():
    y = np.random.default_rng(1).normal(size=40)
    data = Dataset.from_arrays(y=y)
    model = models.NormalModel()
    restriction = Restriction.subset([0], [y.mean()])
    res = trinity(model, data, restriction, fit_both(model, data, restriction))
    for r in res.values():
        assert r.statistic < 1e-12


def test_cauchy_scalar_wald_form():
    y = np.random.default_rng(2).standard_cauchy(30) + 0.4
    model = models.CauchyModel()
    data = Dataset.from_arrays(y=y)
    restriction = Restriction.subset([0], [0.0])
    fits = fit_both(model, data, restriction)
    theta_hat = fits.unrestricted.values[0]
    w = wald_test(model, data, restriction, fits, info="expected")
    assert w.statistic == pytest.approx(theta_hat**2 * y.size / 2, rel=1e-10)


@given(seed=st.integers(0, 2**32 - 1), mu0=st.floats(-1, 1))
def test_normal_mean_trinity_coincides(seed, mu0):
    y = np.random.default_rng(seed).normal(0.2, 1.0, 50)
    data = Dataset.from_arrays(y=y)
    model = models.NormalModel(sigma2=1.0)
    restriction = Restriction.subset([0], [mu0])
    res = trinity(model, data, restriction, fit_both(model, data, restriction))
    target = y.size * (y.mean() - mu0) ** 2
    for r in res.values():
        assert r.statistic == pytest.approx(target, rel=1e-10, abs=1e-12)


def test_one_sided_normal_mean():
    y = sample_with_mean(np.random.default_rng(3), 100, 0.5)
    res = one_sided_score_test(models.NormalModel(sigma2=1.0), Dataset.from_arrays(y=y), [0.0])
    assert res.statistic == pytest.approx(5.0, rel=1e-12)
    less = one_sided_score_test(models.NormalModel(sigma2=1.0), Dataset.from_arrays(y=y), [0.0], "less")
    assert less.statistic == pytest.approx(-5.0, rel=1e-12)


def test_one_sided_cauchy_formula():
    rng = np.random.default_rng(4)
    y = rng.standard_cauchy(25) + 0.3
    theta0 = 0.1
    e = y - theta0
    expected = math.sqrt(2 / y.size) * np.sum(2 * e / (1 + e**2))
    res = one_sided_score_test(models.CauchyModel(), Dataset.from_arrays(y=y), [theta0])
    assert res.statistic == pytest.approx(expected, rel=1e-12)
    assert res.p_value == pytest.approx(normal_sf(expected))


def test_one_sided_zero_score():
    y = np.array([-1.0, 1.0, -2.0, 2.0])
    res = one_sided_score_test(models.NormalModel(sigma2=1.0), Dataset.from_arrays(y=y), [0.0])
    assert res.statistic == 0.0
    assert res.p_value == 0.5


def test_one_sided_multiparameter_uses_efficient_score():
    y = np.random.default_rng(5).normal(0.3, 2.0, 60)
    data = Dataset.from_arrays(y=y)
    res = one_sided_score_test(models.NormalModel(), data, [0.0, 1.0], index=0)
    s2 = np.mean(y**2)
    assert res.statistic == pytest.approx(y.sum() / math.sqrt(y.size * s2), rel=1e-8)
    with pytest.raises(DomainError):
        one_sided_score_test(models.NormalModel(), data, [0.0, 1.0])


def test_moment_test_equals_rs_for_mean():
    y = np.random.default_rng(6).normal(0.2, 1.0, 80)
    model, data, restriction, fits = _normal_mean(y)
    rs = rao_score_test(model, data, restriction, fits).statistic
    mom = moment_test(model, data, lambda d, t: d["y"] - t[0], [0.0], estimated=[],
                      variance=lambda d, t: np.eye(2) * d.n)
    assert mom.statistic == pytest.approx(rs, rel=1e-8)


def test_moment_test_zero_moment_sum():
    y = np.array([-1.0, 1.0, -3.0, 3.0])
    mom = moment_test(models.NormalModel(sigma2=1.0), Dataset.from_arrays(y=y),
                      lambda d, t: d["y"] - t[0], [0.0], estimated=[])
    assert mom.statistic == 0.0


def _regression_fixture(n, seed):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = X @ np.array([1.0, 0.5]) + rng.normal(size=n)
    beta, e = models.ols(y, X)
    theta = np.append(beta, e @ e / n)
    return models.regression_data(y, X), theta, e


def test_moment_test_matches_jarque_bera_with_model_variance():
    data, theta, e = _regression_fixture(10000, 7)
    mom = moment_test(models.RegressionModel(2), data, models.regression_moments, theta,
                      variance=models.regression_moment_cov)
    assert mom.df == 2
    assert mom.statistic == pytest.approx(models.jarque_bera(e).statistic, abs=1e-6)


def test_moment_test_opg_close_to_jarque_bera_at_large_n():
    data, theta, e = _regression_fixture(1_000_000, 8)
    mom = moment_test(models.RegressionModel(2), data, models.regression_moments, theta)
    jb = models.jarque_bera(e).statistic
    assert abs(mom.statistic - jb) < 0.02 * jb + 0.05


def test_rs_invariant_to_parameter_order():
    rng = np.random.default_rng(9)
    n = 50
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = X @ np.array([0.5, 0.3, 0.1]) + rng.normal(size=n)
    order = [2, 0, 1]
    stats = []
    for cols, fix in ((X, 2), (X[:, order], 0)):
        data = models.regression_data(y, cols)
        model = models.RegressionModel(3)
        restriction = Restriction.subset([fix], [0.0])
        fits = fit_both(model, data, restriction)
        stats.append([r.statistic for r in trinity(model, data, restriction, fits).values()])
    assert np.allclose(stats[0], stats[1], rtol=1e-9)


def test_result_json_round_trip():
    r = rao_score_test(*_normal_mean(np.linspace(-1, 2, 30)))
    back = TestResult.from_dict(json.loads(json.dumps(r.to_dict())))
    assert back == r
