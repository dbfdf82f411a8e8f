"""Likelihood contract, score and information-matrix estimators.

Every model in the package subclasses :class:`LikelihoodModel`. A model must
supply per-observation log-densities (or, for models whose observations are
not independent, an override of :meth:`LikelihoodModel.loglike`). Analytic
scores, Hessians and expected information are optional; anything missing is
filled in by central finite differences.

Three information estimates are exposed:

* ``expected``  analytic Fisher information, when the model provides it
* ``observed``  minus the Hessian of the log-likelihood (``K``)
* ``opg``       sum of outer products of per-observation scores (``J``)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import AbsentError, DomainError, NumericError, SingularityWarning

PARTITION_LABELS = ("gamma", "psi", "phi")
INFO_KINDS = ("expected", "observed", "opg")
COND_LIMIT = 1e12

_EPS = np.finfo(float).eps
_STEP1 = _EPS ** (1.0 / 3.0)
_STEP2 = _EPS ** (1.0 / 4.0)


@dataclass(frozen=True)
class ParamVector:
    """Parameter values with a gamma/psi/phi label on every coordinate.

    ``gamma`` marks nuisance parameters, ``psi`` the parameters under test and
    ``phi`` parameters whose local presence a robust test should guard
    against.
    """

    values: np.ndarray
    partition: tuple = ()

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float)).copy()
        if values.ndim != 1:
            raise ValueError("parameter values must be a vector")
        partition = tuple(self.partition) or ("gamma",) * values.size
        if len(partition) != values.size:
            raise ValueError(
                f"partition has {len(partition)} labels for {values.size} values"
            )
        bad = set(partition) - set(PARTITION_LABELS)
        if bad:
            raise ValueError(f"unknown partition labels {sorted(bad)}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "partition", partition)

    @classmethod
    def from_blocks(cls, gamma=(), psi=(), phi=()) -> "ParamVector":
        gamma, psi, phi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in (gamma, psi, phi))
        labels = ("gamma",) * gamma.size + ("psi",) * psi.size + ("phi",) * phi.size
        return cls(np.concatenate([gamma, psi, phi]), labels)

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def dims(self) -> tuple:
        return tuple(self.partition.count(lab) for lab in PARTITION_LABELS)

    def index(self, label: str) -> np.ndarray:
        if label not in PARTITION_LABELS:
            raise ValueError(f"unknown partition label {label!r}")
        return np.array([i for i, lab in enumerate(self.partition) if lab == label], dtype=int)

    def block(self, label: str) -> np.ndarray:
        return self.values[self.index(label)]

    def with_values(self, values) -> "ParamVector":
        return ParamVector(values, self.partition)


def as_values(theta) -> np.ndarray:
    """Plain float vector from a ParamVector, scalar or sequence."""
    if isinstance(theta, ParamVector):
        return np.array(theta.values, dtype=float)
    return np.atleast_1d(np.asarray(theta, dtype=float)).copy()


class Dataset:
    """Named columns sharing a common number of rows.

    Columns may be vectors (``y``) or matrices with ``n`` rows (``X``).
    ``weights`` are optional frequency weights; a row with weight ``w`` counts
    as ``w`` identical observations.
    """

    def __init__(self, columns: Mapping[str, np.ndarray], weights=None):
        if not columns:
            raise DomainError("dataset has no columns")
        cols = {}
        n = None
        for name, col in columns.items():
            arr = np.asarray(col, dtype=float)
            if arr.ndim == 0:
                arr = arr.reshape(1)
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise DomainError(
                    f"column {name!r} has {arr.shape[0]} rows, expected {n}"
                )
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"column {name!r} has missing or non-finite values")
            cols[name] = arr
        if n < 1:
            raise DomainError("dataset must have at least one observation")
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (n,) or np.any(weights < 0) or not np.all(np.isfinite(weights)):
                raise DomainError("weights must be finite, nonnegative and length n")
        self._columns = cols
        self.weights = weights
        self.n = n

    @classmethod
    def from_arrays(cls, weights=None, **columns) -> "Dataset":
        return cls(columns, weights=weights)

    def __getitem__(self, name):
        try:
            return self._columns[name]
        except KeyError:
            raise KeyError(f"dataset has no column {name!r}") from None

    def __contains__(self, name):
        return name in self._columns

    @property
    def names(self) -> tuple:
        return tuple(self._columns)

    @property
    def total_weight(self) -> float:
        return float(self.n if self.weights is None else self.weights.sum())

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        w = None if self.weights is None else self.weights[rows]
        return Dataset({k: v[rows] for k, v in self._columns.items()}, weights=w)

    def __repr__(self):
        return f"Dataset(n={self.n}, columns={list(self._columns)})"


class LikelihoodModel:
    """Base class for a parametric likelihood.

    Subclasses set ``names`` and implement :meth:`logpdf`. Override
    :meth:`scores`, :meth:`hessian` or :meth:`expected_info` to provide
    analytic derivatives; otherwise finite differences are used. Models whose
    log-likelihood does not split into independent terms override
    :meth:`loglike` (and usually :meth:`score`) instead of :meth:`logpdf`.
    """

    names: tuple = ()
    partition: Optional[tuple] = None

    @property
    def dim(self) -> int:
        return len(self.names)

    def param_vector(self, values) -> ParamVector:
        return ParamVector(values, self.partition or ())

    def check_domain(self, theta: np.ndarray) -> None:
        """Raise DomainError if ``theta`` is outside the parameter space."""

    def check_data(self, data: Dataset) -> None:
        """Raise DomainError if ``data`` is unusable for this model."""

    def logpdf(self, data: Dataset, theta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def loglike(self, data: Dataset, theta: np.ndarray) -> float:
        return _wsum(data, self.logpdf(data, theta))

    def scores(self, data: Dataset, theta: np.ndarray) -> np.ndarray:
        """Per-observation scores, shape (n, p)."""
        return _fd_scores(self, data, theta)

    def score(self, data: Dataset, theta: np.ndarray) -> np.ndarray:
        if _overrides(self, "scores") or _overrides(self, "logpdf"):
            return _wsum(data, self.scores(data, theta))
        return _fd_gradient(lambda t: self.loglike(data, t), theta)

    def hessian(self, data: Dataset, theta: np.ndarray):
        """Analytic Hessian of the log-likelihood, or None."""
        return None

    def expected_info(self, data: Dataset, theta: np.ndarray):
        """Analytic Fisher information, or None."""
        return None

    def start(self, data: Dataset):
        """Starting values for the optimizer, or None."""
        return None

    def simulate(self, rng: np.random.Generator, n: int, theta) -> Dataset:
        raise NotImplementedError(f"{type(self).__name__} cannot simulate data")


def _overrides(model, name) -> bool:
    return getattr(type(model), name) is not getattr(LikelihoodModel, name)


def _wsum(data: Dataset, values: np.ndarray):
    values = np.asarray(values, dtype=float)
    if data.weights is None:
        return values.sum(axis=0)
    return np.tensordot(data.weights, values, axes=(0, 0))


def _steps(theta: np.ndarray, base: float) -> np.ndarray:
    return base * np.maximum(1.0, np.abs(theta))


def _fd_gradient(fun, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    h = _steps(theta, _STEP1)
    out = np.empty(theta.size)
    for j in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h[j]
        tm[j] -= h[j]
        out[j] = (fun(tp) - fun(tm)) / (2.0 * h[j])
    return out


def _fd_scores(model, data, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    h = _steps(theta, _STEP1)
    cols = []
    for j in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h[j]
        tm[j] -= h[j]
        cols.append((model.logpdf(data, tp) - model.logpdf(data, tm)) / (2.0 * h[j]))
    return np.column_stack(cols)


def _fd_jacobian(fun, theta: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of a vector function; rows are outputs."""
    theta = np.asarray(theta, dtype=float)
    h = _steps(theta, _STEP1)
    cols = []
    for j in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h[j]
        tm[j] -= h[j]
        cols.append((np.atleast_1d(fun(tp)) - np.atleast_1d(fun(tm))) / (2.0 * h[j]))
    return np.column_stack(cols)


def _fd_hessian_from_values(fun, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    p = theta.size
    h = _steps(theta, _STEP2)
    f0 = fun(theta)
    out = np.empty((p, p))
    for i in range(p):
        for j in range(i, p):
            if i == j:
                tp, tm = theta.copy(), theta.copy()
                tp[i] += h[i]
                tm[i] -= h[i]
                out[i, i] = (fun(tp) - 2.0 * f0 + fun(tm)) / h[i] ** 2
            else:
                vals = []
                for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    t = theta.copy()
                    t[i] += si * h[i]
                    t[j] += sj * h[j]
                    vals.append(fun(t))
                out[i, j] = out[j, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4 * h[i] * h[j])
    return out


def symmetrize(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def _finite(name, value):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{name} has non-finite entries")
    return value


def _prepare(model, data, theta) -> np.ndarray:
    theta = as_values(theta)
    if theta.size != model.dim:
        raise DomainError(f"{type(model).__name__} expects {model.dim} parameters, got {theta.size}")
    model.check_domain(theta)
    model.check_data(data)
    return theta


def check_condition(mat: np.ndarray, label: str = "information") -> float:
    """Condition number of ``mat``; warns with SingularityWarning above 1e12."""
    mat = np.atleast_2d(mat)
    if mat.size == 0:
        return 1.0
    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        warnings.warn(f"{label} matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}",
                      SingularityWarning, stacklevel=3)
    return cond


def log_likelihood(model: LikelihoodModel, data: Dataset, theta) -> float:
    """Sum of log-densities at ``theta``."""
    theta = _prepare(model, data, theta)
    value = float(model.loglike(data, theta))
    if not np.isfinite(value):
        raise NumericError("log-likelihood is not finite")
    return value


def score(model: LikelihoodModel, data: Dataset, theta) -> np.ndarray:
    """Gradient of the log-likelihood, length p."""
    theta = _prepare(model, data, theta)
    return _finite("score", np.atleast_1d(np.asarray(model.score(data, theta), dtype=float)))


def per_observation_scores(model: LikelihoodModel, data: Dataset, theta) -> np.ndarray:
    theta = _prepare(model, data, theta)
    try:
        s = model.scores(data, theta)
    except NotImplementedError:
        raise AbsentError(
            f"{type(model).__name__} has no per-observation log-density"
        ) from None
    return _finite("per-observation scores", np.asarray(s, dtype=float).reshape(data.n, -1))


def observed_information(model: LikelihoodModel, data: Dataset, theta) -> np.ndarray:
    """Minus the Hessian of the log-likelihood (``K``)."""
    theta = _prepare(model, data, theta)
    hess = model.hessian(data, theta)
    if hess is None:
        if _overrides(model, "scores") or _overrides(model, "score"):
            hess = _fd_jacobian(lambda t: model.score(data, t), theta)
        else:
            hess = _fd_hessian_from_values(lambda t: model.loglike(data, t), theta)
    return _finite("observed information", -symmetrize(np.atleast_2d(hess)))


def opg_information(model: LikelihoodModel, data: Dataset, theta) -> np.ndarray:
    """Sum of outer products of per-observation scores (``J``)."""
    s = per_observation_scores(model, data, theta)
    if data.weights is None:
        j = s.T @ s
    else:
        j = (s * data.weights[:, None]).T @ s
    return symmetrize(j)


def information(model: LikelihoodModel, data: Dataset, theta, kind: str = "expected",
                return_kind: bool = False):
    """Information matrix estimate of the requested kind.

    ``expected`` falls back to ``observed`` when the model has no analytic
    Fisher information; pass ``return_kind=True`` to learn which was used.
    """
    if kind not in INFO_KINDS:
        raise ValueError(f"kind must be one of {INFO_KINDS}, got {kind!r}")
    used = kind
    mat = None
    if kind == "expected":
        theta_v = _prepare(model, data, theta)
        mat = model.expected_info(data, theta_v)
        if mat is None:
            used = "observed"
        else:
            mat = _finite("expected information", symmetrize(np.atleast_2d(mat)))
    if used == "observed":
        mat = observed_information(model, data, theta)
    elif used == "opg":
        mat = opg_information(model, data, theta)
    check_condition(mat, used)
    return (mat, used) if return_kind else mat


def default_information(model, data, theta, kind=None):
    """Information matrix and the kind used, following the default order.

    With ``kind=None`` the order is expected, then observed, then OPG.
    """
    if kind is not None:
        return information(model, data, theta, kind, return_kind=True)
    try:
        return information(model, data, theta, "expected", return_kind=True)
    except NumericError:
        return information(model, data, theta, "opg", return_kind=True)


@dataclass
class ScoreBundle:
    """Score and the three information estimates at one parameter point."""

    theta: np.ndarray
    score: np.ndarray
    info_observed: np.ndarray
    info_expected: Optional[np.ndarray] = None
    info_opg: Optional[np.ndarray] = None
    notes: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.info_observed

    @property
    def J(self):
        return self.info_opg


def score_bundle(model: LikelihoodModel, data: Dataset, theta) -> ScoreBundle:
    theta_v = _prepare(model, data, theta)
    s = score(model, data, theta_v)
    k = observed_information(model, data, theta_v)
    exp = model.expected_info(data, theta_v)
    notes = {}
    if exp is None:
        notes["expected"] = "absent"
    else:
        exp = symmetrize(np.atleast_2d(exp))
    try:
        j = opg_information(model, data, theta_v)
    except AbsentError:
        j = None
        notes["opg"] = "absent: no per-observation scores"
    return ScoreBundle(theta_v, s, k, exp, j, notes)


def combine_bundles(bundles: Sequence[ScoreBundle]) -> ScoreBundle:
    """Sum bundles computed on disjoint partitions of one dataset."""
    first = bundles[0]

    def total(attr):
        parts = [getattr(b, attr) for b in bundles]
        return None if any(p is None for p in parts) else sum(parts)

    return ScoreBundle(first.theta, total("score"), total("info_observed"),
                       total("info_expected"), total("info_opg"), dict(first.notes))


@dataclass
class FDReport:
    score_deviation: float
    hessian_deviation: float
    threshold: float = 1e-2

    @property
    def max_deviation(self) -> float:
        return max(self.score_deviation, self.hessian_deviation)

    @property
    def flagged(self) -> bool:
        return self.max_deviation > self.threshold


def _rel_dev(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1.0))


def finite_diff_check(model: LikelihoodModel, data: Dataset, theta, threshold: float = 1e-2) -> FDReport:
    """Compare the model's analytic derivatives with central differences.

    Deviations are max-abs differences scaled by ``max(1, max|reference|)``.
    A derivative the model does not supply contributes zero deviation.
    """
    theta = _prepare(model, data, theta)
    loglike = lambda t: model.loglike(data, t)  # noqa: E731
    fd_grad = _fd_gradient(loglike, theta)
    s_dev = _rel_dev(model.score(data, theta), fd_grad)
    hess = model.hessian(data, theta)
    h_dev = 0.0
    if hess is not None:
        fd_hess = _fd_jacobian(lambda t: model.score(data, t), theta)
        h_dev = _rel_dev(hess, symmetrize(fd_hess))
    return FDReport(s_dev, h_dev, threshold)
