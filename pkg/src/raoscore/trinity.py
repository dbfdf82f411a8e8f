"""Score, Wald and likelihood-ratio statistics.

All quadratic-form statistics are referred to a chi-square distribution
with ``r`` degrees of freedom (the number of restrictions). The restriction
Jacobian ``H`` is stored r x p, so the covariance of ``h(theta_hat)`` is
``H I^{-1} H'``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import core
from .core import Dataset, LikelihoodModel, as_values
from .errors import AbsentError, DomainError, NegativeLR
from .estimate import Fits, Restriction, fit_restricted
from .linalg import quad_form, spd_solve

LR_CLAMP = 1e-8
LR_FAIL = 1e-6


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution via the regularized gamma."""
    x = float(x)
    if x < 0 or math.isnan(x):
        raise DomainError(f"chi-square statistic must be >= 0, got {x}")
    if int(df) != df or df < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {df}")
    if x == 0.0:
        return 1.0
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def normal_sf(z: float) -> float:
    """Upper tail of the standard normal distribution."""
    return 0.5 * math.erfc(float(z) / math.sqrt(2.0))


@dataclass
class TestResult:
    statistic: float
    variant: str
    df: Optional[int]
    p_value: float
    info_kind: Optional[str] = None
    notes: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = {k: _jsonable(v) for k, v in self.notes.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TestResult":
        return cls(**d)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def chi2_result(stat: float, variant: str, df: int, info_kind=None, **notes) -> TestResult:
    stat = float(stat)
    if stat < 0:
        # quadratic forms in a PD matrix; only round-off can make them negative
        if stat < -1e-10 * max(1.0, abs(stat)):
            raise DomainError(f"{variant}: negative quadratic form {stat}")
        stat = 0.0
    return TestResult(stat, variant, int(df), chi2_sf(stat, df), info_kind, dict(notes))


def _restricted(fits: Fits):
    if fits.restricted is None:
        raise AbsentError("a restricted fit is required")
    return fits.restricted


def _unrestricted(fits: Fits):
    if fits.unrestricted is None:
        raise AbsentError("an unrestricted fit is required")
    return fits.unrestricted


def rao_score_test(model: LikelihoodModel, data: Dataset, restriction: Restriction, fits: Fits,
                   info: Optional[str] = None) -> TestResult:
    """``S(theta~)' I(theta~)^{-1} S(theta~)`` at the restricted MLE."""
    theta = _restricted(fits).values
    s = core.score(model, data, theta)
    mat, kind = core.default_information(model, data, theta, info)
    return chi2_result(quad_form(s, mat), "RS", restriction.r, kind)


def wald_test(model: LikelihoodModel, data: Dataset, restriction: Restriction, fits: Fits,
              info: Optional[str] = None) -> TestResult:
    """``d' [H I^{-1} H']^{-1} d`` with ``d = h(theta^) - c`` at the unrestricted MLE."""
    theta = _unrestricted(fits).values
    d = restriction.discrepancy(theta)
    H = restriction.jacobian(theta)
    mat, kind = core.default_information(model, data, theta, info)
    cov_h = H @ spd_solve(mat, H.T)
    return chi2_result(quad_form(d, cov_h, "Wald covariance"), "Wald", restriction.r, kind)


def lr_test(model: LikelihoodModel, data: Dataset, restriction: Restriction, fits: Fits) -> TestResult:
    """``2 [l(theta^) - l(theta~)]``."""
    l_hat = core.log_likelihood(model, data, _unrestricted(fits).values)
    l_tilde = core.log_likelihood(model, data, _restricted(fits).values)
    stat = 2.0 * (l_hat - l_tilde)
    if stat < -LR_FAIL:
        raise NegativeLR(f"LR = {stat:.3g}: the unrestricted fit is not a maximum")
    return chi2_result(max(stat, 0.0), "LR", restriction.r, None)


def lm_form_test(model: LikelihoodModel, data: Dataset, restriction: Restriction, fits: Fits,
                 info: Optional[str] = None) -> TestResult:
    """Score statistic written in the multipliers: ``lam' H I^{-1} H' lam``."""
    fit = _restricted(fits)
    if fit.multipliers is None:
        raise AbsentError("restricted fit carries no multipliers")
    theta = fit.values
    H = restriction.jacobian(theta)
    v = H.T @ fit.multipliers
    mat, kind = core.default_information(model, data, theta, info)
    return chi2_result(quad_form(v, mat), "LM", restriction.r, kind)


def trinity(model, data, restriction, fits, info=None) -> dict:
    """RS, Wald, LR and LM results keyed by variant."""
    return {
        "RS": rao_score_test(model, data, restriction, fits, info),
        "Wald": wald_test(model, data, restriction, fits, info),
        "LR": lr_test(model, data, restriction, fits),
        "LM": lm_form_test(model, data, restriction, fits, info),
    }


def one_sided_score_test(model: LikelihoodModel, data: Dataset, theta0, direction: str = "greater",
                         index: Optional[int] = None, info: Optional[str] = None) -> TestResult:
    """Standardized score ``+-S(theta0)/sqrt(I(theta0))`` for a one-sided alternative.

    For models with more than one parameter give ``index``; the remaining
    parameters are profiled out under the null and the efficient score and
    information are used.
    """
    if direction not in ("greater", "less"):
        raise ValueError("direction must be 'greater' or 'less'")
    sign = 1.0 if direction == "greater" else -1.0
    theta0 = as_values(theta0)
    if model.dim == 1:
        s = core.score(model, data, theta0)[0]
        mat, kind = core.default_information(model, data, theta0, info)
        var = mat[0, 0]
    else:
        if index is None:
            raise DomainError("parameter of interest is not scalar; pass index")
        restriction = Restriction.subset([index], [theta0[index]])
        fit = fit_restricted(model, data, restriction, theta_init=theta0)
        theta = fit.values
        s = core.score(model, data, theta)[index]
        mat, kind = core.default_information(model, data, theta, info)
        # efficient information is the reciprocal of the (index, index) entry of the inverse
        e = np.zeros(model.dim)
        e[index] = 1.0
        var = 1.0 / float(e @ spd_solve(mat, e))
    if var <= 0:
        raise DomainError("score variance is not positive")
    z = sign * s / math.sqrt(var)
    return TestResult(float(z), "OneSidedScore", None, normal_sf(z), kind,
                      {"direction": direction})


def moment_test(model: LikelihoodModel, data: Dataset, moment_fn: Callable, theta,
                estimated=None, variance="opg") -> TestResult:
    """Conditional moment test built on ``sum_i m(y_i; theta~)``.

    ``moment_fn(data, theta)`` returns an (n, r) array. ``estimated`` lists
    the parameter indices that were estimated (default: all). The variance of
    the moment sum is corrected for that estimation by projecting on the
    scores of ``estimated``:

    * ``variance="opg"`` uses outer products of the stacked per-observation
      (score, moment) vectors;
    * a callable ``variance(data, theta)`` returns the model-implied
      (p + r) x (p + r) covariance of the stacked sums (scores first).
    """
    theta = as_values(theta)
    p = model.dim
    estimated = np.arange(p) if estimated is None else np.asarray(estimated, dtype=int)
    m = np.asarray(moment_fn(data, theta), dtype=float).reshape(data.n, -1)
    r = m.shape[1]
    w = np.ones(data.n) if data.weights is None else data.weights
    total = w @ m
    if callable(variance):
        sigma = np.asarray(variance(data, theta), dtype=float)
        kind = "expected"
    elif variance == "opg":
        s = core.per_observation_scores(model, data, theta)
        g = np.column_stack([s, m])
        sigma = (g * w[:, None]).T @ g
        kind = "opg"
    else:
        raise ValueError("variance must be 'opg' or a callable")
    sigma = core.symmetrize(sigma)
    mm = np.arange(p, p + r)
    v = sigma[np.ix_(mm, mm)]
    if estimated.size:
        sm = sigma[np.ix_(estimated, mm)]
        v = v - sm.T @ spd_solve(sigma[np.ix_(estimated, estimated)], sm, "score variance")
    return chi2_result(quad_form(total, v, "moment variance"), "Moment", r, kind)
