"""Score tests robust to distributional and local parametric misspecification.

Notation used throughout:

``J``  outer product of per-observation scores (OPG)
``K``  negative Hessian of the log-likelihood
``B``  sandwich ``K^{-1} J K^{-1}``

The parameter vector is split into ``gamma`` (nuisance, estimated under the
null), ``psi`` (tested) and ``phi`` (locally misspecified, set to zero).
Dotted blocks such as ``I_{psi.gamma}`` are conditional information blocks
``I_psi - I_{psi gamma} I_gamma^{-1} I_{gamma psi}``.

Every statistic first residualizes the score on the ``gamma`` block. At the
restricted estimate the ``gamma`` score is zero so this changes nothing, but
it makes the subset and general-restriction forms agree for any input.

The matrix-level functions (suffix ``_stat``) take plain arrays and index
sets; the model-level functions evaluate ``J``, ``K`` or the information at
the restricted fit and return a :class:`~raoscore.trinity.TestResult`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import core
from .core import ParamVector
from .errors import AbsentError, DomainError
from .estimate import Fits, Restriction
from .linalg import cross_schur, quad_form, schur, spd_solve
from .trinity import TestResult, chi2_result


@dataclass
class PartitionedInfo:
    """A p x p matrix split into gamma/psi/phi blocks."""

    matrix: np.ndarray
    gamma: np.ndarray
    psi: np.ndarray
    phi: np.ndarray

    @classmethod
    def from_labels(cls, matrix, labels):
        labels = tuple(labels)
        idx = {lab: np.array([i for i, x in enumerate(labels) if x == lab], dtype=int)
               for lab in ("gamma", "psi", "phi")}
        return cls(np.asarray(matrix, dtype=float), idx["gamma"], idx["psi"], idx["phi"])

    def block(self, a: str, b: str) -> np.ndarray:
        return self.matrix[np.ix_(getattr(self, a), getattr(self, b))]

    def reassemble(self) -> np.ndarray:
        out = np.zeros_like(self.matrix)
        for a in ("gamma", "psi", "phi"):
            for b in ("gamma", "psi", "phi"):
                out[np.ix_(getattr(self, a), getattr(self, b))] = self.block(a, b)
        return out

    def dotted(self, a: str, b: str) -> np.ndarray:
        """``A_{ab.gamma}``."""
        return cross_schur(self.matrix, getattr(self, a), getattr(self, b), self.gamma)


def _labels_to_index(partition):
    if isinstance(partition, ParamVector):
        partition = partition.partition
    labels = tuple(partition)
    return tuple(np.array([i for i, x in enumerate(labels) if x == lab], dtype=int)
                 for lab in ("gamma", "psi", "phi"))


def _resid_score(S, A, rows, gamma):
    """``S_rows - A_{rows,gamma} A_gamma^{-1} S_gamma``."""
    S = np.asarray(S, dtype=float)
    out = S[rows]
    if gamma.size:
        out = out - A[np.ix_(rows, gamma)] @ spd_solve(A[np.ix_(gamma, gamma)], S[gamma])
    return out


def b_dotted(J, K, rows, cols, gamma) -> np.ndarray:
    """Covariance under ``J`` of the ``K``-residualized scores for ``rows`` and ``cols``.

    ``J_rc - K_rg K_g^{-1} J_gc - J_rg K_g^{-1} K_gc + K_rg K_g^{-1} J_g K_g^{-1} K_gc``
    """
    J, K = np.asarray(J, dtype=float), np.asarray(K, dtype=float)
    rows, cols, gamma = (np.asarray(x, dtype=int) for x in (rows, cols, gamma))
    jrc = J[np.ix_(rows, cols)]
    if gamma.size == 0:
        return jrc
    kg = K[np.ix_(gamma, gamma)]
    a_r = spd_solve(kg, K[np.ix_(gamma, rows)]).T  # K_rg K_g^{-1}
    a_c = spd_solve(kg, K[np.ix_(gamma, cols)]).T
    return (jrc - a_r @ J[np.ix_(gamma, cols)] - J[np.ix_(rows, gamma)] @ a_c.T
            + a_r @ J[np.ix_(gamma, gamma)] @ a_c.T)


def sandwich_B(J, K) -> np.ndarray:
    """``K^{-1} J K^{-1}``."""
    J, K = np.asarray(J, dtype=float), np.asarray(K, dtype=float)
    kinv_j = spd_solve(K, J, "K")
    return core.symmetrize(spd_solve(K, kinv_j.T, "K"))


# matrix-level statistics

def rs_psi_stat(S, info, gamma, psi) -> float:
    """``S_psi' I_{psi.gamma}^{-1} S_psi``."""
    info = np.asarray(info, dtype=float)
    s = _resid_score(S, info, psi, gamma)
    return quad_form(s, schur(info, psi, gamma), "I_psi.gamma")


def rs_star_P_stat(S, info, gamma, psi, phi) -> float:
    """Score test for ``psi`` adjusted for the local presence of ``phi``."""
    info = np.asarray(info, dtype=float)
    if len(phi) == 0:
        return rs_psi_stat(S, info, gamma, psi)
    s_psi = _resid_score(S, info, psi, gamma)
    s_phi = _resid_score(S, info, phi, gamma)
    i_psi = schur(info, psi, gamma)
    i_phi = schur(info, phi, gamma)
    i_psiphi = cross_schur(info, psi, phi, gamma)
    proj = spd_solve(i_phi, i_psiphi.T, "I_phi.gamma").T  # I_psiphi.g I_phi.g^{-1}
    net = s_psi - proj @ s_phi
    var = i_psi - proj @ i_psiphi.T
    return quad_form(net, var, "adjusted psi variance")


def rs_star_D_stat(S, J, K, H) -> float:
    """``S'K^{-1}H' [H B H']^{-1} H K^{-1} S`` for a general restriction (H is r x p)."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    a = H @ spd_solve(K, np.asarray(S, dtype=float), "K")
    return quad_form(a, H @ sandwich_B(J, K) @ H.T, "H B H'")


def rs_star_D_subset_stat(S, J, K, gamma, psi) -> float:
    """Subset form: ``S_psi' V^{-1} S_psi`` with ``V = B_{psi.gamma}``."""
    K = np.asarray(K, dtype=float)
    s = _resid_score(S, K, psi, gamma)
    return quad_form(s, b_dotted(J, K, psi, psi, gamma), "B_psi.gamma")


def rs_star_DP_stat(S, J, K, gamma, psi, phi) -> float:
    """Score test robust to both misspecifications.

    Projection on the ``phi`` score uses the Hessian-based dotted blocks of
    ``K``; the variance of the resulting net score is taken from ``J``.
    """
    K = np.asarray(K, dtype=float)
    if len(phi) == 0:
        return rs_star_D_subset_stat(S, J, K, gamma, psi)
    s_psi = _resid_score(S, K, psi, gamma)
    s_phi = _resid_score(S, K, phi, gamma)
    k_phi = schur(K, phi, gamma)
    k_psiphi = cross_schur(K, psi, phi, gamma)
    proj = spd_solve(k_phi, k_psiphi.T, "K_phi.gamma").T
    net = s_psi - proj @ s_phi
    b_psi = b_dotted(J, K, psi, psi, gamma)
    b_phi = b_dotted(J, K, phi, phi, gamma)
    b_psiphi = b_dotted(J, K, psi, phi, gamma)
    var = b_psi + proj @ b_phi @ proj.T - proj @ b_psiphi.T - b_psiphi @ proj.T
    return quad_form(net, core.symmetrize(var), "DP variance")


def noncentrality_stat(info, gamma, psi, phi, delta) -> float:
    """``delta' I_{phi psi.gamma} I_{psi.gamma}^{-1} I_{psi phi.gamma} delta``."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if delta.size != len(phi):
        raise DomainError(f"delta has length {delta.size}, phi block has {len(phi)}")
    c = cross_schur(info, psi, phi, gamma) @ delta
    return max(quad_form(c, schur(info, psi, gamma), "I_psi.gamma"), 0.0)


# model-level wrappers

def compute_JK(model, data, theta):
    """(J, K) at ``theta``."""
    return core.opg_information(model, data, theta), core.observed_information(model, data, theta)


def _conds(J, K):
    return {"J_cond": float(np.linalg.cond(J)), "K_cond": float(np.linalg.cond(K)),
            "im_discrepancy": im_equality_check(J, K).relative}


def _partition_of(model, partition):
    partition = partition if partition is not None else model.partition
    if partition is None:
        raise DomainError("model has no gamma/psi/phi partition; pass one")
    gamma, psi, phi = _labels_to_index(partition)
    if psi.size == 0:
        raise DomainError("partition has no psi block")
    return gamma, psi, phi


def _restricted_theta(fits):
    if isinstance(fits, Fits):
        if fits.restricted is None:
            raise AbsentError("a restricted fit is required")
        return fits.restricted.values
    return core.as_values(fits)


def rs_star_D(model, data, restriction: Restriction, fits: Fits) -> TestResult:
    """Score test with sandwich variance, valid under distributional misspecification."""
    theta = _restricted_theta(fits)
    S = core.score(model, data, theta)
    J, K = compute_JK(model, data, theta)
    if restriction.kind == "subset":
        psi = restriction.indices
        gamma = restriction.free(model.dim)
        stat = rs_star_D_subset_stat(S, J, K, gamma, psi)
    else:
        stat = rs_star_D_stat(S, J, K, restriction.jacobian(theta))
    return chi2_result(stat, "RS*D", restriction.r, "sandwich", **_conds(J, K))


def wald_star(model, data, restriction: Restriction, fits: Fits) -> TestResult:
    """Wald test with sandwich covariance ``H B H'`` at the unrestricted estimate."""
    if fits.unrestricted is None:
        raise AbsentError("an unrestricted fit is required")
    theta = fits.unrestricted.values
    J, K = compute_JK(model, data, theta)
    H = restriction.jacobian(theta)
    d = restriction.discrepancy(theta)
    stat = quad_form(d, H @ sandwich_B(J, K) @ H.T, "H B H'")
    return chi2_result(stat, "W*", restriction.r, "sandwich", **_conds(J, K))


def rs_psi(model, data, fits, partition=None, info: Optional[str] = None) -> TestResult:
    """Score test for ``psi`` in the model with ``phi`` set to zero."""
    theta = _restricted_theta(fits)
    gamma, psi, phi = _partition_of(model, partition)
    S = core.score(model, data, theta)
    mat, kind = core.default_information(model, data, theta, info)
    return chi2_result(rs_psi_stat(S, mat, gamma, psi), "RS_psi", psi.size, kind)


def rs_star_P(model, data, fits, partition=None, info: Optional[str] = None) -> TestResult:
    """Score test for ``psi`` adjusted for locally present ``phi``."""
    theta = _restricted_theta(fits)
    gamma, psi, phi = _partition_of(model, partition)
    S = core.score(model, data, theta)
    mat, kind = core.default_information(model, data, theta, info)
    notes = {} if phi.size else {"reduced": "no phi block; equals RS_psi"}
    return chi2_result(rs_star_P_stat(S, mat, gamma, psi, phi), "RS*P", psi.size, kind, **notes)


def rs_star_DP(model, data, fits, partition=None) -> TestResult:
    """Score test for ``psi`` robust to both kinds of misspecification."""
    theta = _restricted_theta(fits)
    gamma, psi, phi = _partition_of(model, partition)
    S = core.score(model, data, theta)
    J, K = compute_JK(model, data, theta)
    stat = rs_star_DP_stat(S, J, K, gamma, psi, phi)
    return chi2_result(stat, "RS*DP", psi.size, "sandwich", **_conds(J, K))


def noncentrality(model, data, theta, partition=None, delta=None, info: Optional[str] = None) -> float:
    """Noncentrality of ``RS_psi`` under ``phi = delta / sqrt(n)``."""
    gamma, psi, phi = _partition_of(model, partition)
    mat, _ = core.default_information(model, data, _restricted_theta(theta), info)
    return noncentrality_stat(mat, gamma, psi, phi, delta)


@dataclass
class IMReport:
    relative: float
    blocks: dict = field(default_factory=dict)


def im_equality_check(J, K, names=None) -> IMReport:
    """``||J - K||_F / ||K||_F`` overall and per (i, j) entry block."""
    J, K = np.atleast_2d(J), np.atleast_2d(K)
    if J.shape != K.shape:
        raise ValueError("J and K differ in shape")
    knorm = np.linalg.norm(K)
    rel = float(np.linalg.norm(J - K) / knorm) if knorm > 0 else float(np.linalg.norm(J - K))
    p = J.shape[0]
    names = names or [str(i) for i in range(p)]
    blocks = {}
    for i in range(p):
        for j in range(i, p):
            denom = abs(K[i, j]) if K[i, j] != 0 else np.sqrt(abs(K[i, i] * K[j, j]))
            blocks[(names[i], names[j])] = float(abs(J[i, j] - K[i, j]) / denom) if denom else float("inf")
    return IMReport(rel, blocks)
