import numpy as np
import pytest
from hypothesis import given, strategies as st

from raoscore import core, models
from raoscore.core import Dataset
from raoscore.errors import AbsentError, NoConvergence, RankError
from raoscore.estimate import (Restriction, fit_both, fit_restricted, fit_unrestricted,
                               lagrange_multipliers)


def _regression(rng, n=40, k=3):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    y = X @ rng.normal(size=k) + rng.normal(size=n)
    return models.regression_data(y, X), y, X


def test_normal_mle_closed_form():
    y = np.random.default_rng(0).normal(2.0, 3.0, 60)
    fit = fit_unrestricted(models.NormalModel(), Dataset.from_arrays(y=y))
    assert fit.converged
    assert fit.values[0] == pytest.approx(y.mean(), rel=1e-8)
    assert fit.values[1] == pytest.approx(np.mean((y - y.mean()) ** 2), rel=1e-8)


def test_multinomial_mle_is_cell_share():
    counts = np.array([12.0, 7.0, 30.0, 51.0])
    fit = fit_unrestricted(models.MultinomialModel(4), models.multinomial_data(counts))
    assert np.allclose(fit.values, counts[:-1] / counts.sum(), rtol=1e-8)


def test_regression_mle_is_ols():
    data, y, X = _regression(np.random.default_rng(1))
    fit = fit_unrestricted(models.RegressionModel(3), data)
    beta, resid = models.ols(y, X)
    assert np.allclose(fit.values[:3], beta, rtol=1e-8, atol=1e-10)
    assert fit.values[3] == pytest.approx(resid @ resid / y.size, rel=1e-8)
    assert np.max(np.abs(X.T @ (y - X @ fit.values[:3]))) < 1e-8


def test_gradient_small_at_convergence():
    data, _, _ = _regression(np.random.default_rng(2))
    fit = fit_unrestricted(models.RegressionModel(3), data)
    s = core.score(models.RegressionModel(3), data, fit.values)
    assert np.max(np.abs(s)) < 1e-8 * (1 + abs(fit.loglik))


def test_restricted_normal_variance_with_mean_fixed():
    y = np.random.default_rng(3).normal(0.4, 1.0, 50)
    data = Dataset.from_arrays(y=y)
    fit = fit_restricted(models.NormalModel(), data, Restriction.subset([0], [0.0]))
    assert fit.values[0] == 0.0
    assert fit.values[1] == pytest.approx(np.mean(y**2), rel=1e-8)


def test_subset_multipliers_are_fixed_coordinate_scores():
    data, _, _ = _regression(np.random.default_rng(4))
    model = models.RegressionModel(3)
    fit = fit_restricted(model, data, Restriction.subset([1, 2], [0.0, 0.5]))
    s = core.score(model, data, fit.values)
    assert np.array_equal(lagrange_multipliers(fit), s[[1, 2]])
    assert np.max(np.abs(s[[0, 3]])) < 1e-8


def test_nonbinding_restriction_has_zero_multiplier():
    y = np.random.default_rng(5).normal(size=30)
    data = Dataset.from_arrays(y=y)
    restriction = Restriction.subset([0], [y.mean()])
    fits = fit_both(models.NormalModel(), data, restriction)
    assert abs(lagrange_multipliers(fits.restricted)[0]) < 1e-8
    assert fits.restricted.loglik == pytest.approx(fits.unrestricted.loglik, abs=1e-10)


def test_general_linear_restriction_multipliers_match_direct_solve():
    data, _, _ = _regression(np.random.default_rng(6))
    model = models.RegressionModel(3)
    R = np.array([[0.0, 1.0, 1.0, 0.0]])
    restriction = Restriction.linear(R, [1.0])
    fit = fit_restricted(model, data, restriction)
    theta = fit.values
    assert abs(R @ theta - 1.0)[0] < 1e-8
    S = core.score(model, data, theta)
    info = core.information(model, data, theta, "expected")
    H = restriction.jacobian(theta)
    direct = np.linalg.solve(H @ np.linalg.solve(info, H.T), H @ np.linalg.solve(info, S))
    assert np.allclose(fit.multipliers, direct, rtol=1e-7, atol=1e-9)
    assert np.max(np.abs(S - H.T @ fit.multipliers)) < 1e-7


def test_nonlinear_restriction_first_order_conditions():
    rng = np.random.default_rng(7)
    data = Dataset.from_arrays(y=rng.normal(0.5, 1.2, 80))
    model = models.NormalModel()
    restriction = Restriction.general(lambda t: np.array([t[0] ** 2 - 0.1 * t[1]]), [0.0])
    fit = fit_restricted(model, data, restriction)
    theta = fit.values
    assert abs(restriction.discrepancy(theta)[0]) < 1e-8
    H = restriction.jacobian(theta)
    assert np.max(np.abs(core.score(model, data, theta) - H.T @ fit.multipliers)) < 1e-6


def test_rank_deficient_restriction_rejected():
    data, _, _ = _regression(np.random.default_rng(8))
    R = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0]])
    with pytest.raises(RankError):
        fit_restricted(models.RegressionModel(3), data, Restriction.linear(R, [0.0, 0.0]))


def test_subset_restriction_validation():
    with pytest.raises(ValueError):
        Restriction.subset([0, 0], [1.0, 2.0])
    with pytest.raises(ValueError):
        Restriction.subset([5], [1.0]).validate(3)
    with pytest.raises(RankError):
        Restriction.subset([0, 1, 2, 3], [0.0] * 4).validate(3)


def test_multipliers_absent_on_unrestricted_fit():
    fit = fit_unrestricted(models.NormalModel(), Dataset.from_arrays(y=np.array([0.0, 1.0, 3.0])))
    with pytest.raises(AbsentError):
        lagrange_multipliers(fit)


def test_iteration_cap_raises():
    y = np.random.default_rng(9).standard_cauchy(40) + 10.0
    with pytest.raises(NoConvergence):
        fit_unrestricted(models.CauchyModel(), Dataset.from_arrays(y=y), theta_init=[-50.0], max_iter=1)


@given(seed=st.integers(0, 2**32 - 1))
def test_restricted_never_beats_unrestricted(seed):
    rng = np.random.default_rng(seed)
    data, _, _ = _regression(rng, n=25)
    fits = fit_both(models.RegressionModel(3), data, Restriction.subset([2], [rng.normal()]))
    assert fits.unrestricted.loglik >= fits.restricted.loglik - 1e-8


CASES = [
    (models.NormalModel(), lambda r: Dataset.from_arrays(y=r.normal(1, 2, 40)), Restriction.subset([0], [0.5])),
    (models.BernoulliModel(), lambda r: Dataset.from_arrays(x=(r.random(40) < 0.3).astype(float)), None),
    (models.MultinomialModel(3), lambda r: models.multinomial_data(r.multinomial(90, [0.2, 0.3, 0.5])),
     Restriction.subset([0], [0.25])),
    (models.RegressionModel(3), lambda r: _regression(r)[0], Restriction.subset([1], [0.0])),
    (models.HeteroskedasticRegressionModel(2, 1),
     lambda r: models.regression_data(r.normal(size=60), np.column_stack([np.ones(60), r.normal(size=60)]),
                                      r.uniform(0, 1, 60)),
     Restriction.subset([3], [0.0])),
]


@pytest.mark.parametrize("model,make,restriction", CASES, ids=lambda x: type(x).__name__)
def test_perturbed_start_reaches_same_optimum(model, make, restriction):
    rng = np.random.default_rng(10)
    data = make(rng)
    base = fit_unrestricted(model, data)
    for _ in range(3):
        step = rng.normal(size=model.dim)
        start = base.values + 0.1 * step / np.linalg.norm(step)
        assert np.allclose(fit_unrestricted(model, data, start).values, base.values, atol=1e-6)
    if restriction is not None:
        r0 = fit_restricted(model, data, restriction)
        start = r0.values + 0.1 * np.eye(model.dim)[restriction.free(model.dim)[0]]
        assert np.allclose(fit_restricted(model, data, restriction, start).values, r0.values, atol=1e-6)
