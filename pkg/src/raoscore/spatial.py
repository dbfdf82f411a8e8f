"""Score diagnostics for a regression with a spatial lag and SAR disturbances.

Model::

    y = phi W y + X gamma + u,   u = psi W u + eps,   eps ~ N(0, sigma2 I)

All five diagnostics are evaluated at the joint null ``psi = phi = 0`` where
the restricted estimate is ordinary least squares. With ``a = u'Wu / s2``,
``b = u'Wy / s2``, ``T = tr[(W' + W) W]`` and
``D = [(W X g)' M (W X g) + T s2] / s2`` they are

==============  =====================================
``RS_psi``      ``a^2 / T``
``RS*_psi(P)``  ``(a - T b / D)^2 / (T (1 - T / D))``
``RS_phi``      ``b^2 / D``
``RS*_phi(P)``  ``(b - a)^2 / (D - T)``
``RS_psiphi``   ``a^2 / T + (b - a)^2 / (D - T)``
==============  =====================================

:class:`SarModel` carries the full likelihood so the generic engine in
:mod:`raoscore.robust` can reproduce the closed forms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .core import Dataset, LikelihoodModel
from .errors import DegenerateAdjustment, DomainError
from .trinity import TestResult, chi2_result

ROW_SUM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    """Nonnegative n x n weight matrix with zero diagonal."""

    W: np.ndarray
    row_standardized: bool = False

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise DomainError(f"W must be square, got shape {W.shape}")
        if not np.all(np.isfinite(W)):
            raise DomainError("W has non-finite entries")
        if np.any(W < 0):
            raise DomainError("W has negative entries")
        if np.any(np.diag(W) != 0):
            raise DomainError("W must have a zero diagonal")
        if self.row_standardized:
            sums = W.sum(axis=1)
            nz = sums != 0
            if np.any(np.abs(sums[nz] - 1.0) > ROW_SUM_TOL):
                raise DomainError("W is flagged row-standardized but a row does not sum to 1")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @classmethod
    def from_coordinates(cls, n: int, rows, cols, weights, row_standardized=False) -> "SpatialWeights":
        """Build from (i, j, w) triplets with 0-based indices; duplicates add."""
        W = np.zeros((n, n))
        rows, cols = np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
            raise DomainError(f"coordinate index outside 0..{n - 1}")
        np.add.at(W, (rows, cols), np.asarray(weights, dtype=float))
        return cls(W, row_standardized)


def row_standardize(weights) -> SpatialWeights:
    """Scale each nonzero row of ``W`` to sum to one. Zero rows stay zero."""
    W = weights.W if isinstance(weights, SpatialWeights) else np.asarray(weights, dtype=float)
    sums = W.sum(axis=1, keepdims=True)
    return SpatialWeights(np.divide(W, sums, out=np.zeros_like(W), where=sums != 0), True)


def load_weights(path, n=None) -> SpatialWeights:
    """Read ``W`` from a dense CSV or a 3-column ``i,j,weight`` CSV with a header.

    Coordinate files use 0-based indices; ``n`` defaults to the largest index
    plus one. The matrix is returned as stored, without standardization.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise DomainError(f"{path}: empty weights file")
    header = [c.strip().lower() for c in rows[0]]
    if len(header) == 3 and not _is_number(header[0]):
        trip = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float).reshape(-1, 3)
        size = int(trip[:, :2].max()) + 1 if n is None else n
        return SpatialWeights.from_coordinates(size, trip[:, 0], trip[:, 1], trip[:, 2])
    body = rows if _is_number(rows[0][0]) else rows[1:]
    return SpatialWeights(np.array([[float(c) for c in r] for r in body]))


def _is_number(s) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _as_weights(W) -> SpatialWeights:
    return W if isinstance(W, SpatialWeights) else SpatialWeights(W)


@dataclass(frozen=True, eq=False)
class SarFixture:
    """Data for the null-based spatial diagnostics, with derived quantities cached."""

    y: np.ndarray
    X: np.ndarray
    W: SpatialWeights

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        W = _as_weights(self.W)
        n = y.size
        if X.shape[0] != n or W.n != n:
            raise DomainError(f"y has {n} rows, X {X.shape[0]}, W {W.n}")
        if np.linalg.matrix_rank(X) < X.shape[1]:
            raise DomainError("X does not have full column rank")
        if n <= X.shape[1]:
            raise DomainError("need more observations than regressors")
        for name, v in (("y", y), ("X", X)):
            if not np.all(np.isfinite(v)):
                raise DomainError(f"{name} has non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.y.size

    @cached_property
    def gamma(self) -> np.ndarray:
        return np.linalg.lstsq(self.X, self.y, rcond=None)[0]

    @cached_property
    def residuals(self) -> np.ndarray:
        return self.y - self.X @ self.gamma

    @cached_property
    def sigma2(self) -> float:
        u = self.residuals
        return float(u @ u) / self.n

    @cached_property
    def T(self) -> float:
        W = self.W.W
        return float(np.sum(W * W) + np.sum(W * W.T))  # tr(W'W) + tr(WW)

    def annihilate(self, v) -> np.ndarray:
        """``M v`` with ``M = I - X (X'X)^{-1} X'``."""
        return v - self.X @ np.linalg.lstsq(self.X, v, rcond=None)[0]

    @cached_property
    def M(self) -> np.ndarray:
        return self.annihilate(np.eye(self.n))

    @cached_property
    def info_phi_gamma(self) -> float:
        """Conditional information for the lag parameter given (gamma, sigma2)."""
        wxg = self.W.W @ (self.X @ self.gamma)
        return float((wxg @ self.annihilate(wxg) + self.T * self.sigma2) / self.sigma2)

    @cached_property
    def score_psi(self) -> float:
        u = self.residuals
        return float(u @ (self.W.W @ u)) / self.sigma2

    @cached_property
    def score_phi(self) -> float:
        return float(self.residuals @ (self.W.W @ self.y)) / self.sigma2

    def permuted(self, order) -> "SarFixture":
        order = np.asarray(order)
        return SarFixture(self.y[order], self.X[order],
                          SpatialWeights(self.W.W[np.ix_(order, order)], self.W.row_standardized))


def _gap(fx: SarFixture) -> float:
    gap = fx.info_phi_gamma - fx.T
    if gap <= 1e-12 * max(1.0, fx.T):
        raise DegenerateAdjustment(
            f"conditional lag information {fx.info_phi_gamma:.6g} does not exceed T = {fx.T:.6g}; "
            "the adjusted statistics are undefined (check for WX gamma in the span of X)"
        )
    return gap


def _check_T(fx: SarFixture) -> float:
    if fx.T <= 0:
        raise DegenerateAdjustment("T = tr[(W' + W) W] is zero; W has no links")
    return fx.T


def rs_psi_spatial(fx: SarFixture) -> TestResult:
    """Score test for SAR disturbances; Moran-I equivalent."""
    return chi2_result(fx.score_psi ** 2 / _check_T(fx), "RS_psi", 1, "expected")


def rs_star_psi_spatial(fx: SarFixture) -> TestResult:
    """Score test for SAR disturbances adjusted for a local spatial lag."""
    T = _check_T(fx)
    _gap(fx)
    d = fx.info_phi_gamma
    num = (fx.score_psi - T / d * fx.score_phi) ** 2
    return chi2_result(num / (T * (1.0 - T / d)), "RS*_psi(P)", 1, "expected")


def rs_phi_spatial(fx: SarFixture) -> TestResult:
    """Score test for a spatial lag of ``y``."""
    return chi2_result(fx.score_phi ** 2 / fx.info_phi_gamma, "RS_phi", 1, "expected")


def rs_star_phi_spatial(fx: SarFixture) -> TestResult:
    """Score test for a spatial lag adjusted for local SAR disturbances."""
    num = (fx.score_phi - fx.score_psi) ** 2
    return chi2_result(num / _gap(fx), "RS*_phi(P)", 1, "expected")


def rs_joint_spatial(fx: SarFixture) -> TestResult:
    """Joint score test of ``psi = phi = 0``."""
    T = _check_T(fx)
    stat = fx.score_psi ** 2 / T + (fx.score_phi - fx.score_psi) ** 2 / _gap(fx)
    return chi2_result(stat, "RS_psiphi", 2, "expected")


def all_spatial(fx: SarFixture) -> dict:
    """The five diagnostics plus the largest decomposition residual."""
    out = {
        "psi": rs_psi_spatial(fx),
        "psi-star": rs_star_psi_spatial(fx),
        "phi": rs_phi_spatial(fx),
        "phi-star": rs_star_phi_spatial(fx),
        "joint": rs_joint_spatial(fx),
    }
    out["identity_residual"] = decomposition_residual(out)
    return out


def decomposition_residual(results: dict) -> float:
    """Largest relative gap in ``joint = psi + phi* = phi + psi*``."""
    j = results["joint"].statistic
    r1 = results["psi"].statistic + results["phi-star"].statistic - j
    r2 = results["phi"].statistic + results["psi-star"].statistic - j
    return max(abs(r1), abs(r2)) / max(1.0, abs(j))


class SarModel(LikelihoodModel):
    """Gaussian likelihood for the spatial lag plus SAR-disturbance regression.

    Parameters are ``(gamma_1..gamma_k, sigma2, psi, phi)``; the regression
    coefficients and variance form the nuisance block. Data columns: ``y``
    and ``X`` (n x k). The weights are fixed at construction.
    """

    def __init__(self, W, k: int):
        self.weights = _as_weights(W)
        self.k = int(k)
        self.names = tuple(f"gamma{j}" for j in range(self.k)) + ("sigma2", "psi", "phi")
        self.partition = ("gamma",) * (self.k + 1) + ("psi", "phi")

    def check_domain(self, theta):
        if theta[self.k] <= 0:
            raise DomainError("sigma2 must be positive")

    def check_data(self, data: Dataset):
        if data.n != self.weights.n:
            raise DomainError(f"data has {data.n} rows but W is {self.weights.n} x {self.weights.n}")
        if data.weights is not None:
            raise DomainError("frequency weights are not meaningful for spatial data")

    def _parts(self, data, theta):
        W = self.weights.W
        k = self.k
        gamma, s2, psi, phi = theta[:k], theta[k], theta[k + 1], theta[k + 2]
        y, X = data["y"], np.asarray(data["X"]).reshape(data.n, -1)
        n = y.size
        A = np.eye(n) - phi * W
        B = np.eye(n) - psi * W
        u = A @ y - X @ gamma
        eps = B @ u
        return W, X, y, A, B, u, eps, s2

    def loglike(self, data, theta):
        W, X, y, A, B, u, eps, s2 = self._parts(data, theta)
        sa, lda = np.linalg.slogdet(A)
        sb, ldb = np.linalg.slogdet(B)
        if sa <= 0 or sb <= 0:
            raise DomainError("spatial parameter outside the region where I - rho W is invertible")
        n = y.size
        return -0.5 * n * np.log(2 * np.pi * s2) + lda + ldb - eps @ eps / (2 * s2)

    def score(self, data, theta):
        W, X, y, A, B, u, eps, s2 = self._parts(data, theta)
        n = y.size
        g_gamma = X.T @ (B.T @ eps) / s2
        g_s2 = -0.5 * n / s2 + eps @ eps / (2 * s2 ** 2)
        g_psi = -np.trace(np.linalg.solve(B, W)) + eps @ (W @ u) / s2
        g_phi = -np.trace(np.linalg.solve(A, W)) + eps @ (B @ (W @ y)) / s2
        return np.concatenate([g_gamma, [g_s2, g_psi, g_phi]])

    def expected_info(self, data, theta):
        """Fisher information at ``psi = phi = 0``; None elsewhere."""
        k = self.k
        if theta[k + 1] != 0 or theta[k + 2] != 0:
            return None
        W = self.weights.W
        X = np.asarray(data["X"]).reshape(data.n, -1)
        gamma, s2 = theta[:k], theta[k]
        n = X.shape[0]
        T = float(np.sum(W * W) + np.sum(W * W.T))
        trw = float(np.trace(W))
        wxg = W @ (X @ gamma)
        p = k + 3
        info = np.zeros((p, p))
        info[:k, :k] = X.T @ X / s2
        info[k, k] = n / (2 * s2 ** 2)
        info[k + 1, k + 1] = T
        info[k + 2, k + 2] = T + wxg @ wxg / s2
        info[k + 1, k + 2] = info[k + 2, k + 1] = T
        info[:k, k + 2] = info[k + 2, :k] = X.T @ wxg / s2
        info[k, k + 1] = info[k + 1, k] = trw / s2
        info[k, k + 2] = info[k + 2, k] = trw / s2
        return info

    def start(self, data):
        X = np.asarray(data["X"]).reshape(data.n, -1)
        g = np.linalg.lstsq(X, data["y"], rcond=None)[0]
        e = data["y"] - X @ g
        return np.concatenate([g, [e @ e / data.n, 0.0, 0.0]])

    def null_theta(self, fx: SarFixture) -> np.ndarray:
        """Restricted estimate ``(OLS gamma, s2, 0, 0)``."""
        return np.concatenate([fx.gamma, [fx.sigma2, 0.0, 0.0]])

    def simulate(self, rng, n, theta, X=None):
        """Draw ``y`` with Gaussian errors; ``X`` defaults to an intercept."""
        k = self.k
        X = np.ones((n, 1)) if X is None else np.asarray(X, dtype=float).reshape(n, -1)
        gamma, s2, psi, phi = theta[:k], theta[k], theta[k + 1], theta[k + 2]
        W = self.weights.W
        eps = rng.standard_normal(n) * np.sqrt(s2)
        u = np.linalg.solve(np.eye(n) - psi * W, eps)
        y = np.linalg.solve(np.eye(n) - phi * W, X @ gamma + u)
        return Dataset.from_arrays(y=y, X=X)


def fixture_dataset(fx: SarFixture) -> Dataset:
    return Dataset.from_arrays(y=fx.y, X=fx.X)


def random_weights(rng: np.random.Generator, n: int, neighbours: int = 4) -> SpatialWeights:
    """Row-standardized k-nearest-neighbour weights on uniform random points."""
    pts = rng.random((n, 2))
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    k = min(neighbours, n - 1)
    nearest = np.argsort(d, axis=1)[:, :k]
    W = np.zeros((n, n))
    W[np.repeat(np.arange(n), k), nearest.ravel()] = 1.0
    return row_standardize(W)


def random_fixture(rng: np.random.Generator, n: int, k: int = 2, neighbours: int = 4) -> SarFixture:
    """Null-model fixture: intercept plus ``k - 1`` normal regressors, normal errors.

    With ``k = 1`` and a row-standardized ``W`` the lagged mean ``W X gamma``
    is constant, so the adjusted statistics are degenerate; use ``k >= 2``.
    """
    X = np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])
    y = X @ rng.normal(size=k) + rng.standard_normal(n)
    return SarFixture(y, X, random_weights(rng, n, neighbours))
