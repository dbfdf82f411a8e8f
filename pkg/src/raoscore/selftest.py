"""Identity checks run by ``raoscore selftest``.

Each check evaluates two routes to the same number on seeded fixtures and
records the largest discrepancy.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import models, robust, spatial
from .estimate import Fits, Restriction, fit_both, fit_restricted
from .trinity import lm_form_test, rao_score_test


@dataclass
class IdentityCheck:
    name: str
    discrepancy: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.discrepancy <= self.tolerance)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _rel(a, b) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def spatial_decomposition(seed: int = 0, fixtures: int = 20) -> IdentityCheck:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(fixtures):
        fx = spatial.random_fixture(rng, int(rng.integers(10, 51)), int(rng.integers(2, 5)))
        worst = max(worst, spatial.all_spatial(fx)["identity_residual"])
    return IdentityCheck("joint = psi + phi* = phi + psi* (spatial)", worst, 1e-10)


def random_blocks(rng, dims=(2, 2, 2)):
    """Random PD ``J`` and ``K``, block index sets and a score with zero gamma block."""
    p = sum(dims)
    a, b = rng.normal(size=(p, p)), rng.normal(size=(p, p))
    J, K = a @ a.T + p * np.eye(p), b @ b.T + p * np.eye(p)
    edges = np.cumsum((0,) + tuple(dims))
    gamma, psi, phi = (np.arange(edges[i], edges[i + 1]) for i in range(3))
    S = rng.normal(size=p)
    S[gamma] = 0.0
    return S, J, K, gamma, psi, phi


def robust_reductions(seed: int = 0, fixtures: int = 20) -> list:
    rng = np.random.default_rng(seed)
    w_kj = w_phi = w_both = 0.0
    for _ in range(fixtures):
        S, J, K, g, psi, phi = random_blocks(rng)
        w_kj = max(w_kj, _rel(robust.rs_star_DP_stat(S, J, J, g, psi, phi),
                              robust.rs_star_P_stat(S, J, g, psi, phi)))
        w_phi = max(w_phi, _rel(robust.rs_star_DP_stat(S, J, K, g, psi, []),
                                robust.rs_star_D_subset_stat(S, J, K, g, psi)))
        keep = np.concatenate([g, psi])
        Sk, Jk = S[keep], J[np.ix_(keep, keep)]
        full = float(Sk @ np.linalg.solve(Jk, Sk))
        w_both = max(w_both, _rel(robust.rs_star_DP_stat(Sk, Jk, Jk, g, psi, []), full))
    return [IdentityCheck("RS*(DP) = RS*(P) when K = J", w_kj, 1e-10),
            IdentityCheck("RS*(DP) = RS*(D) without phi", w_phi, 1e-10),
            IdentityCheck("RS*(DP) = RS when K = J, no phi", w_both, 1e-10)]


def lm_equals_rs() -> IdentityCheck:
    rng = np.random.default_rng(1)
    data = models.NormalModel().simulate(rng, 40, [0.3, 2.0])
    model = models.NormalModel()
    restriction = Restriction.subset([0], [0.0])
    fits = fit_both(model, data, restriction)
    d = _rel(rao_score_test(model, data, restriction, fits).statistic,
             lm_form_test(model, data, restriction, fits).statistic)
    return IdentityCheck("LM form = RS (normal mean)", d, 1e-10)


def pearson_equals_rs() -> IdentityCheck:
    counts = np.array([10.0, 20.0, 30.0, 40.0])
    model = models.MultinomialModel(4)
    data = models.multinomial_data(counts)
    restriction = Restriction.subset([0, 1, 2], [0.25, 0.25, 0.25])
    fits = Fits(fit_restricted(model, data, restriction), None)
    rs = rao_score_test(model, data, restriction, fits).statistic
    return IdentityCheck("Pearson = RS (multinomial)", _rel(rs, models.pearson_statistic(counts, np.full(4, 0.25))),
                         1e-10)


def run_all() -> list:
    return [spatial_decomposition(), *robust_reductions(), lm_equals_rs(), pearson_equals_rs()]
