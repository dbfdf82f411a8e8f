"""Model catalogue and closed-form specification tests.

Likelihood models
    NormalModel, CauchyModel, BernoulliModel, MultinomialModel,
    RegressionModel, HeteroskedasticRegressionModel

Closed-form statistics
    pearson_statistic, jarque_bera, robust_skewness_test,
    breusch_pagan, koenker
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, LikelihoodModel
from .errors import DegenerateSample, DomainError, RankError
from .trinity import TestResult, chi2_result

LOG_2PI = np.log(2.0 * np.pi)


class NormalModel(LikelihoodModel):
    """IID normal sample in column ``y``.

    With ``sigma2`` given the variance is known and the only parameter is the
    mean; otherwise the parameters are ``(mu, sigma2)``.
    """

    columns = ("y",)

    def __init__(self, sigma2=None):
        self.sigma2 = sigma2
        self.names = ("mu",) if sigma2 is not None else ("mu", "sigma2")

    def _unpack(self, theta):
        if self.sigma2 is not None:
            return theta[0], float(self.sigma2)
        return theta[0], theta[1]

    def check_domain(self, theta):
        if self.sigma2 is None and not theta[1] > 0:
            raise DomainError("sigma2 must be positive")

    def logpdf(self, data, theta):
        mu, s2 = self._unpack(theta)
        e = data["y"] - mu
        return -0.5 * (LOG_2PI + np.log(s2) + e * e / s2)

    def scores(self, data, theta):
        mu, s2 = self._unpack(theta)
        e = data["y"] - mu
        if self.sigma2 is not None:
            return (e / s2)[:, None]
        return np.column_stack([e / s2, -0.5 / s2 + 0.5 * e * e / s2**2])

    def hessian(self, data, theta):
        mu, s2 = self._unpack(theta)
        n = data.total_weight
        if self.sigma2 is not None:
            return np.array([[-n / s2]])
        w = np.ones(data.n) if data.weights is None else data.weights
        e = data["y"] - mu
        se, see = w @ e, w @ (e * e)
        return np.array([[-n / s2, -se / s2**2],
                         [-se / s2**2, 0.5 * n / s2**2 - see / s2**3]])

    def expected_info(self, data, theta):
        mu, s2 = self._unpack(theta)
        n = data.total_weight
        if self.sigma2 is not None:
            return np.array([[n / s2]])
        return np.diag([n / s2, 0.5 * n / s2**2])

    def start(self, data):
        y = data["y"]
        if self.sigma2 is not None:
            return np.array([y.mean()])
        v = y.var()
        return np.array([y.mean(), v if v > 0 else 1.0])

    def simulate(self, rng, n, theta):
        mu, s2 = self._unpack(np.atleast_1d(theta))
        return Dataset.from_arrays(y=rng.normal(mu, np.sqrt(s2), n))


class CauchyModel(LikelihoodModel):
    """Cauchy location model with unit scale; the parameter is the median."""

    names = ("theta",)
    columns = ("y",)

    def logpdf(self, data, theta):
        u = data["y"] - theta[0]
        return -np.log(np.pi) - np.log1p(u * u)

    def scores(self, data, theta):
        u = data["y"] - theta[0]
        return (2.0 * u / (1.0 + u * u))[:, None]

    def hessian(self, data, theta):
        u = data["y"] - theta[0]
        terms = -2.0 * (1.0 - u * u) / (1.0 + u * u) ** 2
        w = np.ones(data.n) if data.weights is None else data.weights
        return np.array([[w @ terms]])

    def expected_info(self, data, theta):
        return np.array([[data.total_weight / 2.0]])

    def start(self, data):
        return np.array([np.median(data["y"])])

    def simulate(self, rng, n, theta):
        return Dataset.from_arrays(y=theta[0] + rng.standard_cauchy(n))


class BernoulliModel(LikelihoodModel):
    """Binary outcomes in column ``x`` with success probability ``p``."""

    names = ("p",)
    columns = ("x",)

    def check_domain(self, theta):
        if not 0.0 < theta[0] < 1.0:
            raise DomainError("p must lie in (0, 1)")

    def logpdf(self, data, theta):
        p, x = theta[0], data["x"]
        return x * np.log(p) + (1.0 - x) * np.log1p(-p)

    def scores(self, data, theta):
        p, x = theta[0], data["x"]
        return ((x - p) / (p * (1.0 - p)))[:, None]

    def expected_info(self, data, theta):
        p = theta[0]
        return np.array([[data.total_weight / (p * (1.0 - p))]])

    def start(self, data):
        m = float(np.clip(data["x"].mean(), 0.01, 0.99))
        return np.array([m])

    def simulate(self, rng, n, theta):
        return Dataset.from_arrays(x=(rng.random(n) < theta[0]).astype(float))


class MultinomialModel(LikelihoodModel):
    """Multinomial with ``n_classes`` cells; free parameters are the first p-1.

    Data: column ``category`` holding cell labels 0..p-1. Use
    :func:`multinomial_data` to build a dataset from cell counts.
    """

    def __init__(self, n_classes: int):
        if n_classes < 2:
            raise ValueError("need at least two classes")
        self.n_classes = n_classes
        self.names = tuple(f"theta{j + 1}" for j in range(n_classes - 1))

    def full(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return np.append(theta, 1.0 - theta.sum())

    def check_domain(self, theta):
        if np.any(self.full(theta) <= 0):
            raise DomainError("cell probabilities must be positive")

    def check_data(self, data):
        c = data["category"]
        if np.any((c < 0) | (c >= self.n_classes) | (c != np.round(c))):
            raise DomainError("category labels must be integers in [0, p)")

    def _cells(self, data):
        return data["category"].astype(int)

    def logpdf(self, data, theta):
        return np.log(self.full(theta))[self._cells(data)]

    def scores(self, data, theta):
        full = self.full(theta)
        cells = self._cells(data)
        out = np.zeros((data.n, self.n_classes - 1))
        inner = cells < self.n_classes - 1
        out[np.flatnonzero(inner), cells[inner]] = 1.0 / full[cells[inner]]
        out[~inner, :] = -1.0 / full[-1]
        return out

    def hessian(self, data, theta):
        full = self.full(theta)
        counts = cell_counts(data, self.n_classes)
        return -(np.diag(counts[:-1] / full[:-1] ** 2) + counts[-1] / full[-1] ** 2)

    def expected_info(self, data, theta):
        full = self.full(theta)
        n = data.total_weight
        return n * (np.diag(1.0 / full[:-1]) + 1.0 / full[-1])

    def start(self, data):
        counts = cell_counts(data, self.n_classes) + 0.5
        return (counts / counts.sum())[:-1]

    def simulate(self, rng, n, theta):
        counts = rng.multinomial(n, self.full(theta))
        return multinomial_data(counts)


def multinomial_data(counts) -> Dataset:
    """One row per cell, weighted by its count."""
    counts = np.asarray(counts, dtype=float)
    return Dataset.from_arrays(category=np.arange(counts.size, dtype=float), weights=counts)


def cell_counts(data: Dataset, n_classes: int) -> np.ndarray:
    w = np.ones(data.n) if data.weights is None else data.weights
    return np.bincount(data["category"].astype(int), weights=w, minlength=n_classes).astype(float)


def pearson_statistic(counts, theta0) -> float:
    """``sum (O - E)^2 / E`` with ``E = n theta0``."""
    counts = np.asarray(counts, dtype=float)
    expected = counts.sum() * np.asarray(theta0, dtype=float)
    return float(np.sum((counts - expected) ** 2 / expected))


def _check_design(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankError("design matrix is not of full column rank")
    return X


def ols(y, X):
    """OLS coefficients and residuals."""
    X = _check_design(X)
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    return beta, y - X @ beta


class RegressionModel(LikelihoodModel):
    """Normal linear regression ``y = X beta + e``; parameters ``(beta, sigma2)``.

    Data columns: ``y`` (n,) and ``X`` (n, k).
    """

    def __init__(self, k: int):
        self.k = k
        self.names = tuple(f"beta{j}" for j in range(k)) + ("sigma2",)

    def check_domain(self, theta):
        if not theta[-1] > 0:
            raise DomainError("sigma2 must be positive")

    def _resid(self, data, theta):
        return data["y"] - data["X"] @ theta[:-1]

    def logpdf(self, data, theta):
        s2 = theta[-1]
        e = self._resid(data, theta)
        return -0.5 * (LOG_2PI + np.log(s2) + e * e / s2)

    def scores(self, data, theta):
        s2 = theta[-1]
        e = self._resid(data, theta)
        return np.column_stack([data["X"] * (e / s2)[:, None], -0.5 / s2 + 0.5 * e * e / s2**2])

    def hessian(self, data, theta):
        s2 = theta[-1]
        X = data["X"]
        e = self._resid(data, theta)
        out = np.empty((self.k + 1, self.k + 1))
        out[:-1, :-1] = -X.T @ X / s2
        out[:-1, -1] = out[-1, :-1] = -X.T @ e / s2**2
        out[-1, -1] = 0.5 * data.n / s2**2 - e @ e / s2**3
        return out

    def expected_info(self, data, theta):
        s2 = theta[-1]
        X = data["X"]
        out = np.zeros((self.k + 1, self.k + 1))
        out[:-1, :-1] = X.T @ X / s2
        out[-1, -1] = 0.5 * data.n / s2**2
        return out

    def start(self, data):
        beta, e = ols(data["y"], data["X"])
        s2 = e @ e / data.n
        return np.append(beta, s2 if s2 > 0 else 1.0)


class HeteroskedasticRegressionModel(LikelihoodModel):
    """Normal regression with ``Var(e_i) = sigma2 + delta' z_i``.

    Parameters ``(beta, sigma2, delta)``; data columns ``y``, ``X``, ``Z``.
    """

    def __init__(self, k: int, r: int):
        self.k, self.r = k, r
        self.names = (tuple(f"beta{j}" for j in range(k)) + ("sigma2",)
                      + tuple(f"delta{j}" for j in range(r)))

    def _parts(self, data, theta):
        beta, s2, delta = theta[: self.k], theta[self.k], theta[self.k + 1:]
        v = s2 + data["Z"] @ delta
        if np.any(v <= 0):
            raise DomainError("variance function is not positive")
        return beta, v, data["y"] - data["X"] @ beta

    def check_domain(self, theta):
        if not theta[self.k] > 0:
            raise DomainError("sigma2 must be positive")

    def _a(self, data):
        return np.column_stack([np.ones(data.n), data["Z"]])

    def logpdf(self, data, theta):
        _, v, e = self._parts(data, theta)
        return -0.5 * (LOG_2PI + np.log(v) + e * e / v)

    def scores(self, data, theta):
        _, v, e = self._parts(data, theta)
        sb = data["X"] * (e / v)[:, None]
        sv = self._a(data) * (0.5 * (e * e / v - 1.0) / v)[:, None]
        return np.column_stack([sb, sv])

    def expected_info(self, data, theta):
        _, v, _ = self._parts(data, theta)
        X, A = data["X"], self._a(data)
        p = self.k + 1 + self.r
        out = np.zeros((p, p))
        out[: self.k, : self.k] = X.T @ (X / v[:, None])
        out[self.k:, self.k:] = A.T @ (A / (2.0 * v * v)[:, None])
        return out

    def start(self, data):
        beta, e = ols(data["y"], data["X"])
        return np.concatenate([beta, [e @ e / data.n], np.zeros(self.r)])


@dataclass(frozen=True)
class ResidualMoments:
    n: int
    m2: float
    m3: float
    m4: float
    m6: float

    @property
    def sqrt_b1(self) -> float:
        return self.m3 / self.m2**1.5

    @property
    def b1(self) -> float:
        return self.sqrt_b1**2

    @property
    def b2(self) -> float:
        return self.m4 / self.m2**2


def residual_moments(residuals) -> ResidualMoments:
    """Moments about zero with divisor n (OLS residuals are already centred)."""
    e = np.asarray(residuals, dtype=float)
    m2 = float(np.mean(e**2))
    if not m2 > 0:
        raise DegenerateSample("residuals have zero second moment")
    return ResidualMoments(e.size, m2, float(np.mean(e**3)), float(np.mean(e**4)),
                           float(np.mean(e**6)))


def jarque_bera_statistic(n: int, b1: float, b2: float) -> float:
    """``n [b1/6 + (b2 - 3)^2/24]``."""
    return n * (b1 / 6.0 + (b2 - 3.0) ** 2 / 24.0)


def jarque_bera(residuals) -> TestResult:
    """Jarque-Bera normality test, chi-square with 2 df."""
    e = np.asarray(residuals, dtype=float)
    if e.size < 8:
        raise DegenerateSample("need at least 8 residuals")
    # centring makes the statistic location invariant even without an intercept
    mo = residual_moments(e - e.mean())
    stat = jarque_bera_statistic(mo.n, mo.b1, mo.b2)
    return chi2_result(stat, "JB", 2, None, sqrt_b1=mo.sqrt_b1, b2=mo.b2)


def skewness_variance(mo: ResidualMoments) -> float:
    """``9 + m6/m2^3 - 6 m4/m2^2``; equals 6 under normal moments."""
    return 9.0 + mo.m6 / mo.m2**3 - 6.0 * mo.m4 / mo.m2**2


def robust_skewness_test(residuals):
    """Standard and kurtosis-robust score tests of zero skewness.

    Returns ``(RS_c1, RS*_c1(D))``; both are chi-square(1).
    """
    mo = residual_moments(residuals)
    standard = chi2_result(mo.n * mo.b1 / 6.0, "RS", 1, None, denominator=6.0)
    denom = skewness_variance(mo)
    if not denom > 0:
        raise DegenerateSample("robust skewness variance is not positive")
    robust = chi2_result(mo.n * mo.b1 / denom, "RS*D", 1, None, denominator=denom)
    return standard, robust


def _variance_projection(y, X, Z, intercept):
    _, e = ols(y, X)
    n = e.size
    s2 = e @ e / n
    nu = e * e - s2
    Z = np.atleast_2d(np.asarray(Z, dtype=float).T).T
    Za = np.column_stack([np.ones(n), Z]) if intercept else Z
    if np.linalg.matrix_rank(Za) < Za.shape[1]:
        raise RankError("Z is rank deficient")
    coef = np.linalg.lstsq(Za, nu, rcond=None)[0]
    fitted = Za @ coef
    return nu, s2, float(nu @ fitted), Z.shape[1]


def breusch_pagan(y, X, Z, intercept: bool = True) -> TestResult:
    """``nu' Z (Z'Z)^{-1} Z' nu / (2 sigma~^4)`` with ``nu_i = e_i^2 - sigma~^2``.

    An intercept is added to ``Z`` unless ``intercept=False``; the degrees of
    freedom are the number of supplied columns of ``Z``.
    """
    nu, s2, explained, r = _variance_projection(y, X, Z, intercept)
    return chi2_result(explained / (2.0 * s2**2), "BP", r, None)


def koenker(y, X, Z, intercept: bool = True) -> TestResult:
    """Breusch-Pagan with ``2 sigma~^4`` replaced by ``nu'nu / n``."""
    nu, s2, explained, r = _variance_projection(y, X, Z, intercept)
    return chi2_result(explained / (nu @ nu / nu.size), "Koenker", r, None)


def regression_moments(data: Dataset, theta) -> np.ndarray:
    """Skewness and kurtosis moment functions ``(e^3, e^4 - 3 sigma^4)``."""
    e = data["y"] - data["X"] @ theta[:-1]
    s2 = theta[-1]
    return np.column_stack([e**3, e**4 - 3.0 * s2**2])


def regression_moment_cov(data: Dataset, theta) -> np.ndarray:
    """Normal-theory covariance of the stacked (score, moment) sums.

    Ordering matches :class:`RegressionModel` scores followed by
    :func:`regression_moments`.
    """
    X = data["X"]
    s2 = theta[-1]
    k = X.shape[1]
    n = data.n
    p = k + 1
    out = np.zeros((p + 2, p + 2))
    out[:k, :k] = X.T @ X / s2
    out[k, k] = n / (2.0 * s2**2)
    out[:k, p] = out[p, :k] = 3.0 * s2 * X.sum(axis=0)
    out[k, p + 1] = out[p + 1, k] = 6.0 * s2 * n
    out[p, p] = 15.0 * s2**3 * n
    out[p + 1, p + 1] = 96.0 * s2**4 * n
    return out


def regression_data(y, X, Z=None) -> Dataset:
    cols = {"y": np.asarray(y, dtype=float), "X": np.atleast_2d(np.asarray(X, dtype=float).T).T}
    if Z is not None:
        cols["Z"] = np.atleast_2d(np.asarray(Z, dtype=float).T).T
    return Dataset(cols)
