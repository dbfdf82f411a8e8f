"""Unrestricted and restricted maximum likelihood.

The unrestricted fit is a damped Newton iteration on the observed
information with Armijo backtracking. Subset restrictions are handled by
optimizing over the free coordinates only; general restrictions
``h(theta) = c`` are solved by Newton's method on the first-order system
``S(theta) - H(theta)' lam = 0, h(theta) = c``, which also yields the
multipliers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import core
from .core import Dataset, LikelihoodModel, ParamVector, as_values
from .errors import AbsentError, DomainError, NoConvergence, NonConcaveWarning, NumericError, RankError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
POLISH_STEPS = 5


class Restriction:
    """Null hypothesis on the parameter vector.

    Build with :meth:`subset` (fix some coordinates) or :meth:`general`
    (``h(theta) = c``). The Jacobian ``H`` is stored r x p, one row per
    restriction.
    """

    def __init__(self, kind, *, indices=None, values=None, h=None, c=None, jac=None):
        self.kind = kind
        self.indices = indices
        self.values = values
        self._h = h
        self.c = c
        self._jac = jac

    @classmethod
    def subset(cls, indices, values) -> "Restriction":
        indices = np.atleast_1d(np.asarray(indices, dtype=int))
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if indices.size != values.size:
            raise ValueError("indices and values differ in length")
        if len(set(indices.tolist())) != indices.size:
            raise ValueError("subset indices must be distinct")
        return cls("subset", indices=indices, values=values)

    @classmethod
    def general(cls, h: Callable, c, jac: Optional[Callable] = None) -> "Restriction":
        return cls("general", h=h, c=np.atleast_1d(np.asarray(c, dtype=float)), jac=jac)

    @classmethod
    def linear(cls, R, c) -> "Restriction":
        """``R theta = c`` with R of shape (r, p)."""
        R = np.atleast_2d(np.asarray(R, dtype=float))
        return cls.general(lambda t: R @ t, c, jac=lambda t: R)

    @property
    def r(self) -> int:
        return int(self.indices.size if self.kind == "subset" else self.c.size)

    def validate(self, p: int) -> None:
        if self.r > p:
            raise RankError(f"{self.r} restrictions on {p} parameters")
        if self.kind == "subset" and (self.indices.min() < 0 or self.indices.max() >= p):
            raise ValueError("subset index out of range")

    def h(self, theta) -> np.ndarray:
        theta = as_values(theta)
        if self.kind == "subset":
            return theta[self.indices]
        return np.atleast_1d(np.asarray(self._h(theta), dtype=float))

    def target(self) -> np.ndarray:
        return self.values if self.kind == "subset" else self.c

    def discrepancy(self, theta) -> np.ndarray:
        """``h(theta) - c``."""
        return self.h(theta) - self.target()

    def jacobian(self, theta) -> np.ndarray:
        theta = as_values(theta)
        if self.kind == "subset":
            H = np.zeros((self.r, theta.size))
            H[np.arange(self.r), self.indices] = 1.0
            return H
        if self._jac is not None:
            return np.atleast_2d(np.asarray(self._jac(theta), dtype=float)).reshape(self.r, theta.size)
        return core._fd_jacobian(self._h, theta)

    def free(self, p: int) -> np.ndarray:
        if self.kind != "subset":
            return np.arange(p)
        return np.setdiff1d(np.arange(p), self.indices)

    def __repr__(self):
        if self.kind == "subset":
            return f"Restriction.subset({self.indices.tolist()}, {self.values.tolist()})"
        return f"Restriction.general(r={self.r})"


@dataclass
class FitResult:
    theta: ParamVector
    loglik: float
    converged: bool
    iterations: int
    gradient_norm: float
    multipliers: Optional[np.ndarray] = None
    restriction: Optional[Restriction] = None
    notes: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.array(self.theta.values)


@dataclass
class Fits:
    """Restricted and unrestricted fits for one null hypothesis."""

    restricted: Optional[FitResult] = None
    unrestricted: Optional[FitResult] = None


def _initial(model, data, theta_init):
    if theta_init is None:
        theta_init = model.start(data)
    if theta_init is None:
        raise ValueError(f"{type(model).__name__} has no default start; pass theta_init")
    return as_values(theta_init)


def _loglik_or_none(model, data, theta):
    try:
        model.check_domain(theta)
        value = float(model.loglike(data, theta))
    except (DomainError, NumericError, FloatingPointError, ZeroDivisionError):
        return None
    return value if np.isfinite(value) else None


def _regularized_solve(K: np.ndarray, g: np.ndarray):
    """Solve (K + tau I) d = g with the smallest tau making K + tau I PD."""
    if K.size == 0:
        return np.zeros(0), 0.0
    if not (np.all(np.isfinite(K)) and np.all(np.isfinite(g))):
        raise NumericError("non-finite curvature or gradient during Newton ascent")
    scale = max(np.max(np.abs(np.diag(K))), 1.0)
    eye = np.eye(K.shape[0])
    tau = 0.0
    for _ in range(60):
        try:
            L = np.linalg.cholesky(K + tau * eye)
        except np.linalg.LinAlgError:
            # jump past the most negative eigenvalue instead of creeping up to it
            lam = float(np.linalg.eigvalsh(K).min())
            tau = max(2.0 * tau, 1e-8 * scale, -lam + 1e-8 * max(scale, abs(lam)))
            continue
        d = np.linalg.solve(L.T, np.linalg.solve(L, g))
        return d, tau
    return g / scale, np.inf


def _newton_ascent(model, data, theta0, free, tol, max_iter):
    """Maximize the log-likelihood over coordinates ``free``; the rest stay fixed."""
    theta = theta0.copy()
    loglik = _loglik_or_none(model, data, theta)
    if loglik is None:
        raise DomainError("starting value outside the model domain")
    it = 0
    gnorm = np.inf
    while True:
        g = np.asarray(model.score(data, theta), dtype=float)[free]
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < tol * (1.0 + abs(loglik)):
            return theta, loglik, True, it, gnorm
        if it >= max_iter:
            return theta, loglik, False, it, gnorm
        it += 1
        K = core.observed_information(model, data, theta)[np.ix_(free, free)]
        step, _ = _regularized_solve(K, g)
        slope = float(g @ step)
        if slope <= 0:
            step, slope = g, float(g @ g)
        t = 1.0
        accepted = feasible = False
        while t > 1e-14:
            cand = theta.copy()
            cand[free] += t * step
            new = _loglik_or_none(model, data, cand)
            if new is not None:
                feasible = True
                if new >= loglik + 1e-4 * t * slope:
                    accepted = True
                elif new >= loglik - 1e-12 * (1.0 + abs(loglik)):
                    # round-off regime near the optimum: accept if the gradient shrinks
                    g_new = np.asarray(model.score(data, cand), dtype=float)[free]
                    accepted = np.max(np.abs(g_new)) < gnorm
                if accepted:
                    break
            t *= 0.5
        if not accepted:
            if not feasible:
                raise DomainError("no feasible step from current point")
            return theta, loglik, False, it, gnorm
        theta, loglik = cand, new


def _concavity_note(model, data, theta, free, notes):
    K = core.observed_information(model, data, theta)[np.ix_(free, free)]
    if K.size:
        eig = np.linalg.eigvalsh(K)
        if eig.min() < -1e-8 * max(abs(eig).max(), 1.0):
            notes["non_concave"] = True
            warnings.warn("observed information is not PSD at the optimum", NonConcaveWarning,
                          stacklevel=3)


def fit_unrestricted(model: LikelihoodModel, data: Dataset, theta_init=None,
                     tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                     raise_on_failure: bool = True) -> FitResult:
    """Unrestricted MLE by Newton-Raphson with backtracking."""
    theta0 = _initial(model, data, theta_init)
    model.check_data(data)
    free = np.arange(model.dim)
    theta, loglik, ok, it, gnorm = _newton_ascent(model, data, theta0, free, tol, max_iter)
    if not ok and raise_on_failure:
        raise NoConvergence(f"no convergence after {it} iterations (|S|={gnorm:.3g})")
    notes = {}
    _concavity_note(model, data, theta, free, notes)
    return FitResult(model.param_vector(theta), loglik, ok, it, gnorm, notes=notes)


def fit_restricted(model: LikelihoodModel, data: Dataset, restriction: Restriction,
                   theta_init=None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                   raise_on_failure: bool = True) -> FitResult:
    """Restricted MLE and its Lagrange multipliers."""
    theta0 = _initial(model, data, theta_init)
    model.check_data(data)
    restriction.validate(model.dim)
    if restriction.kind == "subset":
        return _fit_subset(model, data, restriction, theta0, tol, max_iter, raise_on_failure)
    return _fit_general(model, data, restriction, theta0, tol, max_iter, raise_on_failure)


def _fit_subset(model, data, restriction, theta0, tol, max_iter, raise_on_failure):
    theta0 = theta0.copy()
    theta0[restriction.indices] = restriction.values
    free = restriction.free(model.dim)
    theta, loglik, ok, it, gnorm = _newton_ascent(model, data, theta0, free, tol, max_iter)
    if not ok and raise_on_failure:
        raise NoConvergence(f"restricted fit: no convergence after {it} iterations")
    theta[restriction.indices] = restriction.values
    s = core.score(model, data, theta)
    notes = {}
    _concavity_note(model, data, theta, free, notes)
    return FitResult(model.param_vector(theta), loglik, ok, it, gnorm,
                     multipliers=s[restriction.indices].copy(), restriction=restriction,
                     notes=notes)


def _lagrangian_jacobian_term(restriction, theta, lam):
    """Derivative of H(theta)' lam with respect to theta."""
    return core._fd_jacobian(lambda t: restriction.jacobian(t).T @ lam, theta)


def _fit_general(model, data, restriction, theta0, tol, max_iter, raise_on_failure):
    theta = theta0.copy()
    p, r = model.dim, restriction.r

    def residuals(th, lam):
        s = np.asarray(model.score(data, th), dtype=float)
        H = restriction.jacobian(th)
        return s - H.T @ lam, restriction.discrepancy(th), s, H

    s = np.asarray(model.score(data, theta), dtype=float)
    H = restriction.jacobian(theta)
    lam = np.linalg.lstsq(H.T, s, rcond=None)[0]
    loglik = _loglik_or_none(model, data, theta)
    if loglik is None:
        raise DomainError("starting value outside the model domain")
    def newton_direction(th, lm, stat, feas, H):
        K = core.observed_information(model, data, th)
        A = -K - _lagrangian_jacobian_term(restriction, th, lm)
        jac = np.block([[A, -H.T], [H, np.zeros((r, r))]])
        rhs = -np.concatenate([stat, feas])
        try:
            return np.linalg.solve(jac, rhs), float(rhs @ rhs)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(jac, rhs, rcond=None)[0], float(rhs @ rhs)

    it = 0
    ok = False
    while True:
        stat, feas, s, H = residuals(theta, lam)
        loglik = float(model.loglike(data, theta))
        scale = 1.0 + abs(loglik)
        gnorm = float(np.max(np.abs(stat)))
        if gnorm < tol * scale and np.max(np.abs(feas)) < tol:
            ok = True
            break
        if it >= max_iter:
            break
        it += 1
        delta, merit = newton_direction(theta, lam, stat, feas, H)
        t = 1.0
        moved = False
        while t > 1e-14:
            cand = theta + t * delta[:p]
            cand_lam = lam + t * delta[p:]
            if _loglik_or_none(model, data, cand) is not None:
                st, fe, _, _ = residuals(cand, cand_lam)
                if st @ st + fe @ fe <= (1.0 - 1e-4 * t) * merit:
                    moved = True
                    break
            t *= 0.5
        if not moved:
            break
        theta, lam = cand, cand_lam
    if ok:
        # polish: full steps while the KKT residual keeps shrinking, so S = H' lam holds to round-off
        for _ in range(POLISH_STEPS):
            stat, feas, _, H = residuals(theta, lam)
            delta, merit = newton_direction(theta, lam, stat, feas, H)
            cand, cand_lam = theta + delta[:p], lam + delta[p:]
            if _loglik_or_none(model, data, cand) is None:
                break
            st, fe, _, _ = residuals(cand, cand_lam)
            if not st @ st + fe @ fe < 0.25 * merit:
                break
            theta, lam = cand, cand_lam
    if not ok and raise_on_failure:
        raise NoConvergence(f"restricted fit: no convergence after {it} iterations")
    H = restriction.jacobian(theta)
    if np.linalg.matrix_rank(H) < r:
        raise RankError("restriction Jacobian is rank deficient at the solution")
    s = np.asarray(model.score(data, theta), dtype=float)
    lam = np.linalg.lstsq(H.T, s, rcond=None)[0]
    notes = {}
    return FitResult(model.param_vector(theta), float(model.loglike(data, theta)), ok, it,
                     float(np.max(np.abs(s - H.T @ lam))), multipliers=lam,
                     restriction=restriction, notes=notes)


def lagrange_multipliers(fit: FitResult) -> np.ndarray:
    """Multipliers of a restricted fit (``S(theta~) = H' lam``)."""
    if fit.multipliers is None:
        raise AbsentError("unrestricted fits carry no Lagrange multipliers")
    return np.array(fit.multipliers)


def fit_both(model: LikelihoodModel, data: Dataset, restriction: Restriction, theta_init=None,
             **opts) -> Fits:
    """Restricted and unrestricted fits from a common start."""
    unrestricted = fit_unrestricted(model, data, theta_init, **opts)
    restricted = fit_restricted(model, data, restriction, theta_init=unrestricted.values, **opts)
    return Fits(restricted=restricted, unrestricted=unrestricted)
