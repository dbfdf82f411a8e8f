import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import exact_normal_moment_data, sample_with_mean
from raoscore import core, models
from raoscore.core import Dataset, LikelihoodModel, ParamVector
from raoscore.errors import AbsentError, DomainError, NumericError, SingularityWarning


# ParamVector and Dataset

def test_param_vector_blocks_and_dims():
    pv = ParamVector.from_blocks(gamma=[1.0, 2.0], psi=[3.0], phi=[4.0, 5.0])
    assert pv.dims == (2, 1, 2)
    assert np.array_equal(pv.block("phi"), [4.0, 5.0])
    assert np.array_equal(np.asarray(pv), [1, 2, 3, 4, 5])


def test_param_vector_rejects_bad_partition():
    with pytest.raises(ValueError):
        ParamVector([1.0, 2.0], ("gamma",))
    with pytest.raises(ValueError):
        ParamVector([1.0], ("delta",))


def test_dataset_requires_observations():
    with pytest.raises(DomainError):
        Dataset.from_arrays(y=np.array([]))


def test_dataset_rejects_missing_values():
    with pytest.raises(DomainError):
        Dataset.from_arrays(y=np.array([1.0, np.nan]))


def test_dataset_rejects_ragged_columns():
    with pytest.raises(DomainError):
        Dataset.from_arrays(y=np.zeros(3), x=np.zeros(4))


# log-likelihood

def test_normal_loglik_two_zeros():
    data = Dataset.from_arrays(y=np.zeros(2))
    value = core.log_likelihood(models.NormalModel(), data, [0.0, 1.0])
    assert value == pytest.approx(-math.log(2 * math.pi), abs=1e-12)
    assert value == pytest.approx(-1.837877, abs=1e-6)


def test_multinomial_loglik_is_count_weighted_log_probs():
    counts = np.array([10, 20, 30, 40])
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    data = models.multinomial_data(counts)
    value = core.log_likelihood(models.MultinomialModel(4), data, probs[:-1])
    oracle = sum(c * math.log(p) for c, p in zip(counts, probs))
    assert value == pytest.approx(oracle, rel=1e-13)


def test_domain_violation_is_an_error():
    data = Dataset.from_arrays(y=np.zeros(2))
    with pytest.raises(DomainError):
        core.log_likelihood(models.NormalModel(), data, [0.0, -1.0])


def test_nonfinite_loglik_is_numeric_error():
    data = Dataset.from_arrays(x=np.array([1.0, 0.0]))

    class Broken(models.BernoulliModel):
        def check_domain(self, theta):
            pass

    with pytest.raises(NumericError), np.errstate(divide="ignore", invalid="ignore"):
        core.log_likelihood(Broken(), data, [0.0])


# score

def test_normal_mean_score_is_n_times_mean():
    y = sample_with_mean(np.random.default_rng(0), 100, 0.5)
    s = core.score(models.NormalModel(sigma2=1.0), Dataset.from_arrays(y=y), [0.0])
    assert s[0] == pytest.approx(50.0, rel=1e-12)


def test_score_sums_per_observation_scores():
    rng = np.random.default_rng(1)
    data = Dataset.from_arrays(y=rng.normal(size=30))
    model = models.NormalModel()
    theta = [0.2, 1.3]
    assert np.allclose(core.score(model, data, theta),
                       core.per_observation_scores(model, data, theta).sum(axis=0), rtol=1e-13)


def test_cauchy_score_vanishes_at_observation():
    data = Dataset.from_arrays(y=np.array([1.7]))
    assert core.score(models.CauchyModel(), data, [1.7])[0] == 0.0


def test_score_zero_at_mle():
    rng = np.random.default_rng(2)
    data = Dataset.from_arrays(y=rng.normal(1.0, 2.0, 50))
    y = data["y"]
    s = core.score(models.NormalModel(), data, [y.mean(), y.var()])
    assert np.max(np.abs(s)) < 1e-10


# information

def test_expected_info_normal_known_variance():
    data = Dataset.from_arrays(y=np.zeros(100))
    mat, kind = core.default_information(models.NormalModel(sigma2=1.0), data, [0.3])
    assert kind == "expected"
    assert mat[0, 0] == 100.0


def test_expected_info_cauchy_is_half_n():
    data = Dataset.from_arrays(y=np.arange(20.0))
    mat = core.information(models.CauchyModel(), data, [0.0], "expected")
    assert mat[0, 0] == pytest.approx(10.0)


def test_expected_falls_back_to_observed_with_flag():
    class NoExpected(models.NormalModel):
        def expected_info(self, data, theta):
            return None

    data = Dataset.from_arrays(y=np.array([0.1, -0.4, 1.2]))
    mat, kind = core.information(NoExpected(), data, [0.0, 1.0], "expected", return_kind=True)
    assert kind == "observed"
    assert np.allclose(mat, core.observed_information(models.NormalModel(), data, [0.0, 1.0]))


def test_exact_normal_moments_make_opg_equal_hessian():
    data = exact_normal_moment_data()
    y, w = data["y"], data.weights
    m2 = float(w @ y**2 / w.sum())
    theta = [0.0, m2]
    J = core.opg_information(models.NormalModel(), data, theta)
    K = core.observed_information(models.NormalModel(), data, theta)
    assert np.allclose(J, K, rtol=1e-12, atol=1e-12)


def test_opg_absent_without_per_observation_density():
    class Joint(LikelihoodModel):
        names = ("a",)

        def loglike(self, data, theta):
            return -float(np.sum((data["y"] - theta[0]) ** 2))

    with pytest.raises(AbsentError):
        core.opg_information(Joint(), Dataset.from_arrays(y=np.zeros(3)), [0.0])


def test_condition_warning():
    with pytest.warns(SingularityWarning):
        core.check_condition(np.diag([1.0, 1e-14]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        core.check_condition(np.eye(3))


CATALOGUE = [
    (models.NormalModel(), lambda r: Dataset.from_arrays(y=r.normal(size=25)),
     lambda r: [r.normal(), r.uniform(0.5, 2.0)]),
    (models.NormalModel(sigma2=2.0), lambda r: Dataset.from_arrays(y=r.normal(size=25)),
     lambda r: [r.normal()]),
    (models.CauchyModel(), lambda r: Dataset.from_arrays(y=r.standard_cauchy(25)),
     lambda r: [r.normal()]),
    (models.BernoulliModel(), lambda r: Dataset.from_arrays(x=(r.random(25) < 0.4).astype(float)),
     lambda r: [r.uniform(0.1, 0.9)]),
    (models.MultinomialModel(4), lambda r: models.multinomial_data(r.multinomial(60, [0.1, 0.2, 0.3, 0.4])),
     lambda r: r.dirichlet(np.ones(4) * 5)[:-1]),
    (models.RegressionModel(2),
     lambda r: models.regression_data(r.normal(size=25), np.column_stack([np.ones(25), r.normal(size=25)])),
     lambda r: [r.normal(), r.normal(), r.uniform(0.5, 2.0)]),
    (models.HeteroskedasticRegressionModel(2, 1),
     lambda r: models.regression_data(r.normal(size=25), np.column_stack([np.ones(25), r.normal(size=25)]),
                                      r.uniform(0, 1, 25)),
     lambda r: [r.normal(), r.normal(), r.uniform(0.5, 2.0), r.uniform(0.0, 0.3)]),
]


@pytest.mark.parametrize("model,make_data,make_theta", CATALOGUE, ids=lambda x: type(x).__name__)
@given(seed=st.integers(0, 2**32 - 1))
def test_analytic_score_matches_central_differences(model, make_data, make_theta, seed):
    rng = np.random.default_rng(seed)
    data = make_data(rng)
    theta = np.asarray(make_theta(rng), dtype=float)
    analytic = core.score(model, data, theta)
    fd = core._fd_gradient(lambda t: model.loglike(data, t), theta)
    scale = max(1.0, np.max(np.abs(fd)))
    assert np.max(np.abs(analytic - fd)) / scale < 1e-5


@pytest.mark.parametrize("model,make_data,make_theta", CATALOGUE, ids=lambda x: type(x).__name__)
def test_information_matrices_symmetric_and_opg_psd(model, make_data, make_theta):
    rng = np.random.default_rng(11)
    data, theta = make_data(rng), make_theta(rng)
    bundle = core.score_bundle(model, data, theta)
    for mat in (bundle.info_observed, bundle.info_expected, bundle.info_opg):
        if mat is not None:
            assert np.array_equal(mat, mat.T)
    eig = np.linalg.eigvalsh(bundle.J)
    assert eig.min() >= -1e-10 * np.trace(bundle.J)


def test_score_bundles_combine_over_partitions():
    rng = np.random.default_rng(4)
    data = Dataset.from_arrays(y=rng.normal(size=40))
    model, theta = models.NormalModel(), [0.1, 1.2]
    parts = [core.score_bundle(model, data.take(idx), theta) for idx in np.array_split(np.arange(40), 3)]
    whole = core.score_bundle(model, data, theta)
    combined = core.combine_bundles(parts)
    for attr in ("score", "info_observed", "info_expected", "info_opg"):
        assert np.allclose(getattr(combined, attr), getattr(whole, attr), rtol=1e-12)


# finite-difference check

def test_fd_check_normal_is_tight():
    data = Dataset.from_arrays(y=np.random.default_rng(5).normal(size=40))
    report = core.finite_diff_check(models.NormalModel(), data, [0.3, 1.4])
    assert report.max_deviation < 1e-6
    assert not report.flagged


def test_fd_check_flags_wrong_score():
    class WrongScore(models.NormalModel):
        def scores(self, data, theta):
            return 1.5 * super().scores(data, theta)

    data = Dataset.from_arrays(y=np.random.default_rng(6).normal(size=40))
    report = core.finite_diff_check(WrongScore(), data, [0.3, 1.4])
    assert report.max_deviation > 1e-2
    assert report.flagged


def test_fd_check_cauchy_near_null():
    data = Dataset.from_arrays(y=np.random.default_rng(7).standard_cauchy(30))
    assert core.finite_diff_check(models.CauchyModel(), data, [0.05]).max_deviation < 1e-5


# sup property of the score statistic

@given(seed=st.integers(0, 2**32 - 1))
def test_directional_score_never_exceeds_rs(seed):
    rng = np.random.default_rng(seed)
    model = models.RegressionModel(3)
    X = np.column_stack([np.ones(30), rng.normal(size=(30, 2))])
    data = models.regression_data(rng.normal(size=30), X)
    theta = np.array([0.2, -0.1, 0.3, 1.1])
    S = core.score(model, data, theta)
    info = core.information(model, data, theta, "expected")
    rs = float(S @ np.linalg.solve(info, S))
    deltas = rng.normal(size=(200, 4))
    ratios = (deltas @ S) ** 2 / np.einsum("ij,jk,ik->i", deltas, info, deltas)
    assert np.all(ratios <= rs + 1e-8)
    best = np.linalg.solve(info, S)
    assert (best @ S) ** 2 / (best @ info @ best) == pytest.approx(rs, rel=1e-8)
