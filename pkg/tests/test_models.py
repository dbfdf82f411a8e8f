import numpy as np
import pytest
from hypothesis import given, strategies as st

from raoscore import models
from raoscore.errors import DegenerateSample, RankError
from raoscore.estimate import Fits, Restriction, fit_restricted
from raoscore.montecarlo import McConfig, run_mc
from raoscore.trinity import rao_score_test

from helpers import normal_moment_residuals


def test_jarque_bera_arithmetic():
    assert models.jarque_bera_statistic(120, 0.25, 4.0) == pytest.approx(10.0, rel=1e-14)


def test_jarque_bera_from_residuals():
    e = np.random.default_rng(0).normal(size=200)
    c = e - e.mean()
    m2, m3, m4 = (np.mean(c**k) for k in (2, 3, 4))
    b1, b2 = m3**2 / m2**3, m4 / m2**2
    res = models.jarque_bera(e)
    assert res.statistic == pytest.approx(200 * (b1 / 6 + (b2 - 3) ** 2 / 24), rel=1e-12)
    assert res.df == 2
    with pytest.raises(DegenerateSample):
        models.jarque_bera(np.zeros(5))


def test_jarque_bera_location_and_scale_invariant():
    e = np.random.default_rng(1).standard_t(5, size=150)
    base = models.jarque_bera(e).statistic
    assert models.jarque_bera(3.0 * e + 7.0).statistic == pytest.approx(base, rel=1e-10)


def test_skewness_variance_at_normal_moments():
    mo = models.ResidualMoments(n=100, m2=1.0, m3=0.0, m4=3.0, m6=15.0)
    assert models.skewness_variance(mo) == 6.0


def test_robust_skewness_equals_standard_at_normal_moments():
    e = normal_moment_residuals()
    mo = models.residual_moments(e)
    assert mo.b1 > 1e-4
    assert models.skewness_variance(mo) == pytest.approx(6.0, abs=1e-10)
    standard, robust_res = models.robust_skewness_test(e)
    assert robust_res.statistic == pytest.approx(standard.statistic, rel=1e-10)


def test_robust_skewness_structure_on_heavy_tails():
    e = np.random.default_rng(2).standard_t(6, size=400)
    e = e - e.mean()
    standard, robust_res = models.robust_skewness_test(e)
    m2, m3, m4, m6 = (np.mean(e**k) for k in (2, 3, 4, 6))
    b1 = m3**2 / m2**3
    assert standard.statistic == pytest.approx(e.size * b1 / 6, rel=1e-12)
    denom = 9 + m6 / m2**3 - 6 * m4 / m2**2
    assert robust_res.statistic == pytest.approx(e.size * b1 / denom, rel=1e-12)
    assert denom > 6


def _bp_fixture(seed, n=120, hetero=0.0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    Z = rng.uniform(0, 2, size=(n, 2))
    y = X @ np.array([1.0, -0.5]) + np.sqrt(1 + hetero * Z[:, 0]) * rng.normal(size=n)
    return y, X, Z


def _explained(v, Z):
    Za = np.column_stack([np.ones(len(v)), Z])
    fit = Za @ np.linalg.lstsq(Za, v, rcond=None)[0]
    return np.sum((fit - v.mean()) ** 2)


def test_breusch_pagan_and_koenker_oracles():
    y, X, Z = _bp_fixture(3, hetero=1.5)
    e = y - X @ np.linalg.lstsq(X, y, rcond=None)[0]
    n = y.size
    s2 = e @ e / n
    bp = models.breusch_pagan(y, X, Z)
    assert bp.statistic == pytest.approx(0.5 * _explained(e**2 / s2, Z), rel=1e-10)
    assert bp.df == 2
    e2 = e**2
    r2 = _explained(e2, Z) / np.sum((e2 - e2.mean()) ** 2)
    k = models.koenker(y, X, Z)
    assert k.statistic == pytest.approx(n * r2, rel=1e-10)
    nu = e2 - s2
    assert k.statistic == pytest.approx(bp.statistic * 2 * s2**2 / (nu @ nu / n), rel=1e-10)


@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 10), shift=st.floats(-5, 5))
def test_breusch_pagan_invariances(seed, scale, shift):
    y, X, Z = _bp_fixture(seed)
    base_bp = models.breusch_pagan(y, X, Z).statistic
    base_k = models.koenker(y, X, Z).statistic
    for args in ((scale * y, X, Z), (y + X @ np.array([shift, 2.0]), X, Z), (y, X, shift + scale * Z)):
        assert models.breusch_pagan(*args).statistic == pytest.approx(base_bp, rel=1e-8)
        assert models.koenker(*args).statistic == pytest.approx(base_k, rel=1e-8)


def test_breusch_pagan_rank_deficient_z():
    y, X, Z = _bp_fixture(4)
    with pytest.raises(RankError):
        models.breusch_pagan(y, X, np.column_stack([Z[:, 0], 2 * Z[:, 0]]))


def test_pearson_anchor_and_rs():
    counts = np.array([10.0, 20.0, 30.0, 40.0])
    assert models.pearson_statistic(counts, [0.25] * 4) == pytest.approx(20.0, rel=1e-14)
    assert models.pearson_statistic([25.0] * 4, [0.25] * 4) == 0.0


@given(seed=st.integers(0, 2**32 - 1))
def test_pearson_equals_generic_rs(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(3, 9))
    probs = rng.dirichlet(np.full(p, 3.0))
    counts = rng.multinomial(int(rng.integers(50, 501)), probs).astype(float)
    model = models.MultinomialModel(p)
    data = models.multinomial_data(counts)
    restriction = Restriction.subset(np.arange(p - 1), probs[:-1])
    fits = Fits(fit_restricted(model, data, restriction), None)
    rs = rao_score_test(model, data, restriction, fits).statistic
    assert rs == pytest.approx(models.pearson_statistic(counts, probs), rel=1e-10)


def test_regression_moment_cov_matches_simulation():
    rng = np.random.default_rng(5)
    n = 50
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    theta = np.array([0.5, 1.0, 2.0])
    sums = []
    model = models.RegressionModel(2)
    for _ in range(4000):
        y = X @ theta[:2] + np.sqrt(theta[2]) * rng.normal(size=n)
        data = models.regression_data(y, X)
        s = model.scores(data, theta).sum(axis=0)
        sums.append(np.concatenate([s, models.regression_moments(data, theta).sum(axis=0)]))
    emp = np.cov(np.array(sums).T)
    model_cov = models.regression_moment_cov(models.regression_data(np.zeros(n), X), theta)
    scale = np.sqrt(np.outer(np.diag(model_cov), np.diag(model_cov)))
    assert np.max(np.abs(emp - model_cov) / scale) < 0.1


def test_jarque_bera_size_under_normal_errors():
    report = run_mc(McConfig("regression", "jarque-bera", n=200, reps=10000, master_seed=5))
    assert 0.03 <= report.rate(0.05) <= 0.08
