"""Sequential one-sided score test with a simulated stopping boundary.

Observations arrive one at a time. With ``S_n`` the cumulative score at the
null value after ``n`` observations, sampling stops with rejection at the
first ``n <= N`` where ``S_n >= A(N)``; otherwise the null is accepted at
``N``. ``A(N)`` has no closed form, so :func:`calibrate_boundary` sets it by
simulating the null distribution of ``max_{n <= N} S_n``.

With ``scale="standardized"`` the path is ``S_n / sqrt(n i(theta0))`` instead,
where ``i`` is the single-observation information; such a plan needs its own
calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Iterable, Optional, Union

import numpy as np

from . import core
from .core import Dataset
from .errors import DomainError, StreamExhausted
from .montecarlo import Failure, quantile_with_se, replicate
from .trinity import normal_sf

MIN_CALIBRATION_REPS = 1000


@dataclass(frozen=True)
class SequentialPlan:
    theta0: float
    n_max: int
    alpha: float = 0.05
    boundary: Optional[float] = None
    direction: str = "greater"
    scale: str = "raw"

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise DomainError(f"n_max must be a positive integer, got {self.n_max}")
        if not 0 < self.alpha <= 0.5:
            raise DomainError(f"alpha must lie in (0, 0.5], got {self.alpha}")
        if self.direction not in ("greater", "less"):
            raise DomainError("direction must be 'greater' or 'less'")
        if self.scale not in ("raw", "standardized"):
            raise DomainError("scale must be 'raw' or 'standardized'")

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "greater" else -1.0


@dataclass
class SequentialOutcome:
    decision: str
    stopping_time: int
    trajectory: np.ndarray
    boundary: float
    notes: dict = field(default_factory=dict)

    @property
    def rejected(self) -> bool:
        return self.decision == "reject"


def _check_scalar(model):
    if model.dim != 1:
        raise DomainError(f"sequential test needs a scalar parameter, model has {model.dim}")


def unit_information(model, theta0: float) -> float:
    """Information in one observation at ``theta0``."""
    column = model.columns[0]
    # the catalogue scalar models have data-free expected information, so any probe row works
    probe = Dataset.from_arrays(**{column: np.zeros(1)})
    mat, _ = core.default_information(model, probe, [theta0])
    return float(mat[0, 0])


def score_path(model, data: Dataset, plan: SequentialPlan) -> np.ndarray:
    """Running statistic for the first ``len(data)`` observations."""
    s = plan.sign * core.per_observation_scores(model, data, [plan.theta0])[:, 0]
    path = np.cumsum(s)
    if plan.scale == "standardized":
        path = path / np.sqrt(np.arange(1, path.size + 1) * unit_information(model, plan.theta0))
    return path


def _as_dataset(model, obs) -> Dataset:
    if isinstance(obs, Dataset):
        return obs
    if isinstance(obs, dict):
        return Dataset.from_arrays(**{k: np.atleast_1d(v) for k, v in obs.items()})
    return Dataset.from_arrays(**{model.columns[0]: np.atleast_1d(float(obs))})


def run_sequential(model, stream: Union[Dataset, Iterable], plan: SequentialPlan) -> SequentialOutcome:
    """Apply the stopping rule to ``stream``.

    ``stream`` is a :class:`Dataset` (rows in arrival order) or an iterable of
    single observations (scalars for the model's data column, dicts, or
    one-row datasets). Iterables are consumed lazily and only up to the
    stopping time.
    """
    _check_scalar(model)
    if plan.boundary is None:
        raise DomainError("plan has no boundary; calibrate it first")
    A = float(plan.boundary)
    N = int(plan.n_max)
    if isinstance(stream, Dataset):
        rows = stream.take(np.arange(min(stream.n, N)))
        path = score_path(model, rows, plan)
        hit = np.flatnonzero(path >= A)
        if hit.size:
            t = int(hit[0]) + 1
            return SequentialOutcome("reject", t, path[:t], A)
        if path.size < N:
            raise StreamExhausted(f"stream ended after {path.size} of {N} observations")
        return SequentialOutcome("accept-at-N", N, path, A)

    info = unit_information(model, plan.theta0) if plan.scale == "standardized" else None
    total = 0.0
    path = []
    it = iter(stream)
    for n in range(1, N + 1):
        try:
            obs = next(it)
        except StopIteration:
            raise StreamExhausted(f"stream ended after {n - 1} of {N} observations") from None
        total += plan.sign * float(core.score(model, _as_dataset(model, obs), [plan.theta0])[0])
        value = total if info is None else total / math.sqrt(n * info)
        path.append(value)
        if value >= A:
            return SequentialOutcome("reject", n, np.array(path), A)
    return SequentialOutcome("accept-at-N", N, np.array(path), A)


def _max_task(model, theta, plan, rng):
    data = model.simulate(rng, plan.n_max, [theta])
    return float(score_path(model, data, plan).max())


def boundary_from_maxima(maxima: np.ndarray, alpha: float) -> float:
    """Smallest observed maximum ``v`` with ``#{max >= v} <= alpha * reps``.

    Ties in discrete models are kept whole, so the simulated level never
    exceeds ``alpha``.
    """
    x = np.sort(np.asarray(maxima, dtype=float))
    m = x.size
    allowed = alpha * m
    # count of maxima >= x[j] is m - (first index of x[j])
    first = np.searchsorted(x, x, side="left")
    ok = (m - first) <= allowed + 1e-9
    if not ok.any():
        return float(np.nextafter(x[-1], np.inf))
    return float(x[np.argmax(ok)])


def _ok_values(raw):
    bad = [r for r in raw if isinstance(r, Failure)]
    if bad:
        raise DomainError(f"{len(bad)} simulation replications failed: {bad[0].message}")
    return np.asarray(raw, dtype=float)


def calibrate_boundary(model, theta0: float, n_max: int, alpha: float, reps: int = 10000, seed: int = 0,
                       direction: str = "greater", scale: str = "raw", workers: Optional[int] = None,
                       return_se: bool = False):
    """Boundary ``A(N)`` giving level ``alpha`` for the sequential rule.

    With ``return_se`` also returns a Monte Carlo standard error of the
    underlying ``1 - alpha`` quantile of ``max_n S_n``.
    """
    _check_scalar(model)
    if reps < MIN_CALIBRATION_REPS:
        raise DomainError(f"calibration needs reps >= {MIN_CALIBRATION_REPS}, got {reps}")
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    # plan validation caps alpha at 0.5; calibration itself accepts any level
    plan = SequentialPlan(theta0, n_max, min(alpha, 0.5), None, direction, scale)
    maxima = _ok_values(replicate(partial(_max_task, model, theta0, plan), reps, seed, workers))
    A = boundary_from_maxima(maxima, alpha)
    if return_se:
        q = min(max(1.0 - alpha, 0.0), 1.0)
        se = quantile_with_se(maxima, q)[1] if 0 < q < 1 else 0.0
        return A, se
    return A


def calibrate(plan: SequentialPlan, model, reps: int = 10000, seed: int = 0,
              workers: Optional[int] = None) -> SequentialPlan:
    """Copy of ``plan`` with a simulated boundary."""
    A = calibrate_boundary(model, plan.theta0, plan.n_max, plan.alpha, reps, seed,
                           plan.direction, plan.scale, workers)
    return replace(plan, boundary=A)


def _compare_task(model, theta, plan, rng):
    data = model.simulate(rng, plan.n_max, [theta])
    path = score_path(model, data, plan)
    hit = np.flatnonzero(path >= plan.boundary)
    stop = int(hit[0]) + 1 if hit.size else plan.n_max
    raw_total = plan.sign * float(core.per_observation_scores(model, data, [plan.theta0])[:, 0].sum())
    z = raw_total / math.sqrt(plan.n_max * unit_information(model, plan.theta0))
    return (float(hit.size > 0), float(stop), float(normal_sf(z) <= plan.alpha))


@dataclass
class ComparisonReport:
    theta: float
    reps: int
    sequential_power: float
    expected_stopping_time: float
    fixed_power: float
    n_max: int
    boundary: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compare_fixed_vs_sequential(model, theta_alt: float, plan: SequentialPlan, reps: int = 10000,
                                seed: int = 0, workers: Optional[int] = None) -> ComparisonReport:
    """Power and mean stopping time of the sequential rule against the fixed-N test.

    The fixed-sample comparator is the one-sided score test on all ``N``
    observations at the same level. Both are evaluated on the same simulated
    samples, and a fixed ``seed`` gives common random numbers across
    ``theta_alt`` values.
    """
    _check_scalar(model)
    if plan.boundary is None:
        raise DomainError("plan has no boundary; calibrate it first")
    out = _ok_values(replicate(partial(_compare_task, model, theta_alt, plan), reps, seed, workers))
    out = out.reshape(-1, 3)
    return ComparisonReport(float(theta_alt), int(reps), float(out[:, 0].mean()), float(out[:, 1].mean()),
                            float(out[:, 2].mean()), int(plan.n_max), float(plan.boundary))
