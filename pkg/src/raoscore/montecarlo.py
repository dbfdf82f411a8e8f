"""Monte Carlo size, power and null-quantile experiments.

Reproducibility scheme: replication ``r`` under master seed ``s`` draws from
``Generator(Philox(SeedSequence(s, spawn_key=(r,))))``. Philox is a
counter-based generator, so each replication owns an independent stream
keyed by ``(s, r)`` and the draw index is the counter. Results are collected
in replication order, so serial and parallel runs give identical reports.

The worker count defaults to 1 and may be overridden with the
``RAOSCORE_WORKERS`` environment variable.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache, partial
from typing import Callable, Optional

import numpy as np
from scipy import stats as sps

from . import models, spatial
from .core import Dataset
from .errors import DomainError, RaoScoreError, UnknownName
from .estimate import Fits, Restriction, fit_both, fit_restricted
from .trinity import TestResult, chi2_result, lr_test, one_sided_score_test, rao_score_test, wald_test

WORKERS_ENV = "RAOSCORE_WORKERS"
FAILURE_LIMIT = 0.01
BAND_LEVEL = 0.99
QUANTILE_LEVELS = (0.90, 0.95, 0.99)


def rng_for(master_seed: int, rep: int) -> np.random.Generator:
    """Independent generator for replication ``rep``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(master_seed), spawn_key=(int(rep),))))


def resolve_workers(workers: Optional[int] = None) -> int:
    if workers is None:
        env = os.environ.get(WORKERS_ENV, "").strip()
        workers = int(env) if env else 1
    if workers < 1:
        raise DomainError(f"worker count must be >= 1, got {workers}")
    return int(workers)


@dataclass(frozen=True)
class Failure:
    kind: str
    message: str


def _run_chunk(task: Callable, master_seed: int, start: int, stop: int) -> list:
    out = []
    # degenerate draws surface as exceptions and are counted; keep numpy quiet meanwhile
    with np.errstate(divide="ignore", invalid="ignore"):
        for rep in range(start, stop):
            try:
                out.append(task(rng_for(master_seed, rep)))
            except (RaoScoreError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                out.append(Failure(type(exc).__name__, str(exc)))
    return out


def replicate(task: Callable, reps: int, master_seed: int, workers: Optional[int] = None) -> list:
    """``[task(rng_for(master_seed, r)) for r in range(reps)]``, possibly in parallel.

    ``task`` must be picklable when ``workers > 1`` (a module-level function
    or a ``functools.partial`` of one). Numerical exceptions are returned as
    :class:`Failure` entries instead of propagating.
    """
    workers = resolve_workers(workers)
    if workers == 1 or reps < 2:
        return _run_chunk(task, master_seed, 0, reps)
    n_chunks = min(reps, 4 * workers)
    edges = np.linspace(0, reps, n_chunks + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, task, master_seed, int(a), int(b))
                   for a, b in zip(edges[:-1], edges[1:]) if b > a]
        out = []
        for f in futures:
            out.extend(f.result())
    return out


def binomial_band(alpha: float, reps: int, level: float = BAND_LEVEL) -> tuple:
    """Exact central binomial acceptance band for an empirical rejection rate."""
    tail = (1.0 - level) / 2.0
    lo = sps.binom.ppf(tail, reps, alpha)
    hi = sps.binom.isf(tail, reps, alpha)
    return float(lo) / reps, float(hi) / reps


def quantile_with_se(values: np.ndarray, q: float) -> tuple:
    """Empirical quantile and a standard error from order-statistic bounds."""
    x = np.sort(values)
    m = x.size
    est = float(np.quantile(x, q))
    half = 1.959963984540054 * math.sqrt(m * q * (1 - q))
    lo = int(max(0, math.floor(m * q - half)))
    hi = int(min(m - 1, math.ceil(m * q + half)))
    return est, float((x[hi] - x[lo]) / (2 * 1.959963984540054))


# data generators

DGPS: dict = {}
STATISTICS: dict = {}


def _register(table, name):
    def deco(fn):
        table[name] = fn
        return fn
    return deco


def _t_errors(rng, n, df, standardize):
    e = rng.standard_t(df, n)
    if standardize:
        e = e * math.sqrt((df - 2) / df)
    return e


@_register(DGPS, "normal")
def _dgp_normal(rng, n, mu=0.0, sigma2=1.0):
    return Dataset.from_arrays(y=rng.normal(mu, math.sqrt(sigma2), n))


@_register(DGPS, "student-t")
def _dgp_t(rng, n, df=5.0, mu=0.0, scale=1.0, standardize=False):
    return Dataset.from_arrays(y=mu + scale * _t_errors(rng, n, df, standardize))


@_register(DGPS, "cauchy")
def _dgp_cauchy(rng, n, theta=0.0):
    return Dataset.from_arrays(y=theta + rng.standard_cauchy(n))


@_register(DGPS, "bernoulli")
def _dgp_bernoulli(rng, n, p=0.5):
    return Dataset.from_arrays(x=(rng.random(n) < p).astype(float))


@_register(DGPS, "multinomial")
def _dgp_multinomial(rng, n, probs=(0.25, 0.25, 0.25, 0.25)):
    return models.multinomial_data(rng.multinomial(n, np.asarray(probs, dtype=float)))


@_register(DGPS, "constant")
def _dgp_constant(rng, n, value=0.0):
    return Dataset.from_arrays(y=np.full(n, float(value)))


@_register(DGPS, "chi2")
def _dgp_chi2(rng, n, df=1):
    return Dataset.from_arrays(stat=np.array([rng.chisquare(df)]))


@lru_cache(maxsize=32)
def _design(n, k, design_seed):
    rng = np.random.default_rng(design_seed)
    return np.column_stack([np.ones(n), rng.standard_normal((n, k - 1))])


def _errors(rng, n, errors, df, sigma2):
    if errors == "normal":
        return rng.standard_normal(n) * math.sqrt(sigma2)
    if errors == "t":
        return _t_errors(rng, n, df, True) * math.sqrt(sigma2)
    raise UnknownName(f"unknown error law {errors!r}; use 'normal' or 't'")


@_register(DGPS, "regression")
def _dgp_regression(rng, n, beta=(1.0, 1.0), sigma2=1.0, errors="normal", df=5.0, design_seed=0):
    beta = np.asarray(beta, dtype=float)
    X = _design(n, beta.size, design_seed)
    y = X @ beta + _errors(rng, n, errors, df, sigma2)
    return models.regression_data(y, X, X[:, 1:])


@lru_cache(maxsize=32)
def _layout(n, neighbours, layout_seed):
    return spatial.random_weights(np.random.default_rng(layout_seed), n, neighbours)


@_register(DGPS, "sar")
def _dgp_sar(rng, n, gamma=(1.0, 1.0), sigma2=1.0, psi=0.0, phi=0.0, errors="normal", df=5.0,
             layout_seed=0, neighbours=4, design_seed=0):
    """Spatial fixture with a fixed layout and design, fresh errors each draw."""
    gamma = np.asarray(gamma, dtype=float)
    X = _design(n, gamma.size, design_seed)
    W = _layout(n, neighbours, layout_seed)
    eps = _errors(rng, n, errors, df, sigma2)
    I = np.eye(n)
    u = eps if psi == 0 else np.linalg.solve(I - psi * W.W, eps)
    mean = X @ gamma + u
    y = mean if phi == 0 else np.linalg.solve(I - phi * W.W, mean)
    return spatial.SarFixture(y, X, W)


# statistics

def _normal_mean_fits(data, mu0, sigma2):
    model = models.NormalModel(sigma2=sigma2)
    restriction = Restriction.subset([0], [mu0])
    return model, restriction, fit_both(model, data, restriction)


@_register(STATISTICS, "normal-mean")
def _stat_normal_mean(data, mu0=0.0, sigma2=None, variant="RS"):
    model, restriction, fits = _normal_mean_fits(data, mu0, sigma2)
    fn = {"RS": rao_score_test, "Wald": wald_test, "LR": lr_test}.get(variant)
    if fn is None:
        raise UnknownName(f"variant {variant!r} not in RS/Wald/LR")
    return fn(model, data, restriction, fits)


@_register(STATISTICS, "cauchy-one-sided")
def _stat_cauchy(data, theta0=0.0, direction="greater"):
    return one_sided_score_test(models.CauchyModel(), data, [theta0], direction)


@_register(STATISTICS, "normal-one-sided")
def _stat_normal_one_sided(data, mu0=0.0, sigma2=1.0, direction="greater"):
    return one_sided_score_test(models.NormalModel(sigma2=sigma2), data, [mu0], direction)


@_register(STATISTICS, "pearson")
def _stat_pearson(data, probs=(0.25, 0.25, 0.25, 0.25)):
    probs = np.asarray(probs, dtype=float)
    counts = models.cell_counts(data, probs.size)
    return chi2_result(models.pearson_statistic(counts, probs), "Pearson", probs.size - 1, "expected")


@_register(STATISTICS, "multinomial-rs")
def _stat_multinomial_rs(data, probs=(0.25, 0.25, 0.25, 0.25)):
    probs = np.asarray(probs, dtype=float)
    model = models.MultinomialModel(probs.size)
    restriction = Restriction.subset(np.arange(probs.size - 1), probs[:-1])
    fits = Fits(fit_restricted(model, data, restriction), None)
    return rao_score_test(model, data, restriction, fits)


@_register(STATISTICS, "jarque-bera")
def _stat_jb(data):
    return models.jarque_bera(_residuals(data))


@_register(STATISTICS, "robust-skewness")
def _stat_robust_skew(data):
    return models.robust_skewness_test(_residuals(data))[1]


@_register(STATISTICS, "breusch-pagan")
def _stat_bp(data):
    return models.breusch_pagan(data["y"], _matrix(data, "X"), _matrix(data, "Z"))


@_register(STATISTICS, "koenker")
def _stat_koenker(data):
    return models.koenker(data["y"], _matrix(data, "X"), _matrix(data, "Z"))


def _matrix(data, name):
    return np.asarray(data[name], dtype=float).reshape(data.n, -1)


def _residuals(data):
    X = _matrix(data, "X")
    beta = np.linalg.lstsq(X, data["y"], rcond=None)[0]
    return data["y"] - X @ beta


for _name, _fn in (("spatial-psi", spatial.rs_psi_spatial),
                   ("spatial-psi-star", spatial.rs_star_psi_spatial),
                   ("spatial-phi", spatial.rs_phi_spatial),
                   ("spatial-phi-star", spatial.rs_star_phi_spatial),
                   ("spatial-joint", spatial.rs_joint_spatial)):
    STATISTICS[_name] = _fn


@_register(STATISTICS, "identity")
def _stat_identity(data, df=1):
    return chi2_result(float(data["stat"][0]), "identity", df)


@_register(STATISTICS, "zero")
def _stat_zero(data):
    return TestResult(0.0, "zero", 1, 1.0)


def lookup(table: dict, name: str, what: str):
    try:
        return table[name]
    except KeyError:
        raise UnknownName(f"unknown {what} {name!r}; known: {', '.join(sorted(table))}") from None


# experiment

@dataclass(frozen=True)
class McConfig:
    dgp: str
    statistic: str
    n: int
    reps: int
    alphas: tuple = (0.05,)
    master_seed: int = 0
    dgp_params: dict = field(default_factory=dict)
    stat_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.reps < 100:
            raise DomainError(f"reps must be >= 100, got {self.reps}")
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        alphas = tuple(float(a) for a in np.atleast_1d(self.alphas))
        if not all(0 < a < 1 for a in alphas):
            raise DomainError(f"alpha levels must lie in (0, 1), got {alphas}")
        object.__setattr__(self, "alphas", alphas)
        lookup(DGPS, self.dgp, "dgp")
        lookup(STATISTICS, self.statistic, "statistic")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alphas"] = list(self.alphas)
        return d


def _mc_task(dgp, dgp_params, statistic, stat_params, n, rng):
    data = DGPS[dgp](rng, n, **dgp_params)
    res = STATISTICS[statistic](data, **stat_params)
    return (res.statistic, res.p_value)


@dataclass
class McReport:
    config: dict
    n_valid: int
    failures: int
    failure_kinds: dict
    failed: bool
    rates: dict
    bands: dict
    quantiles: Optional[dict]
    statistic_digest: str

    def to_dict(self) -> dict:
        return asdict(self)

    def rate(self, alpha: float) -> float:
        return self.rates[_key(alpha)]

    def band(self, alpha: float) -> tuple:
        return tuple(self.bands[_key(alpha)])

    def in_band(self, alpha: float) -> bool:
        lo, hi = self.band(alpha)
        return lo <= self.rate(alpha) <= hi


def _key(alpha) -> str:
    return f"{float(alpha):g}"


def run_mc(config: McConfig, workers: Optional[int] = None) -> McReport:
    """Run ``config.reps`` replications and summarize rejection rates.

    A replication rejects at level ``a`` when its p-value is ``<= a``.
    Failed replications are excluded from the rates; more than 1% failures
    marks the report as failed and the quantiles as unavailable.
    """
    task = partial(_mc_task, config.dgp, dict(config.dgp_params), config.statistic,
                   dict(config.stat_params), config.n)
    raw = replicate(task, config.reps, config.master_seed, workers)
    ok = [r for r in raw if not isinstance(r, Failure)]
    bad = [r for r in raw if isinstance(r, Failure)]
    kinds: dict = {}
    for f in bad:
        kinds[f.kind] = kinds.get(f.kind, 0) + 1
    stats = np.array([r[0] for r in ok], dtype=float)
    pvals = np.array([r[1] for r in ok], dtype=float)
    m = stats.size
    failed = len(bad) > FAILURE_LIMIT * config.reps or m == 0
    rates, bands = {}, {}
    for a in config.alphas:
        rates[_key(a)] = float(np.count_nonzero(pvals <= a)) / m if m else float("nan")
        bands[_key(a)] = list(binomial_band(a, m)) if m else [float("nan"), float("nan")]
    quantiles = None
    if not failed:
        quantiles = {}
        for q in QUANTILE_LEVELS:
            est, se = quantile_with_se(stats, q)
            quantiles[_key(q)] = {"value": est, "se": se}
    digest = hashlib.sha256(stats.tobytes() + pvals.tobytes()).hexdigest()
    return McReport(config.to_dict(), m, len(bad), kinds, failed, rates, bands, quantiles, digest)


def null_quantiles(config: McConfig, workers: Optional[int] = None) -> Optional[dict]:
    """Empirical 90/95/99% quantiles under the configured (null) DGP, or None if unavailable."""
    return run_mc(config, workers).quantiles


def format_report(report: McReport) -> str:
    """Aligned text table of rates, bands and quantiles."""
    lines = [f"{'alpha':>8}  {'rate':>10}  {'band_lo':>10}  {'band_hi':>10}"]
    for a, r in report.rates.items():
        lo, hi = report.bands[a]
        lines.append(f"{a:>8}  {r:>10.6g}  {lo:>10.6g}  {hi:>10.6g}")
    if report.quantiles:
        lines.append(f"{'quantile':>8}  {'value':>10}  {'se':>10}")
        for q, d in report.quantiles.items():
            lines.append(f"{q:>8}  {d['value']:>10.6g}  {d['se']:>10.6g}")
    else:
        lines.append("quantiles unavailable")
    lines.append(f"valid={report.n_valid} failures={report.failures} failed={report.failed}")
    return "\n".join(lines)
