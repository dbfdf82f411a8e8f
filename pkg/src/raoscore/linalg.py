"""Small dense linear-algebra helpers with condition monitoring."""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import SingularInfo

COND_LIMIT = 1e12


def spd_solve(A, B, label: str = "information"):
    """Solve ``A X = B`` for symmetric positive-definite ``A``.

    Raises SingularInfo when ``A`` is not positive definite or its condition
    number exceeds 1e12. A pseudo-inverse is never substituted.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{label}: matrix is not square, shape {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"{label}: shapes {A.shape} and {B.shape} do not conform")
    if A.size == 0:
        return np.zeros_like(B)
    A = 0.5 * (A + A.T)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularInfo(f"{label} matrix is singular (condition number {cond:.3g})")
    try:
        factor = sla.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        raise SingularInfo(f"{label} matrix is not positive definite") from None
    return sla.cho_solve(factor, B)


def quad_form(v, A, label: str = "information") -> float:
    """``v' A^{-1} v``."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return float(v @ spd_solve(A, v, label))


def schur(A, keep, drop, label: str = "information"):
    """``A_kk - A_kd A_dd^{-1} A_dk`` for index sets ``keep`` and ``drop``."""
    A = np.asarray(A, dtype=float)
    keep, drop = np.asarray(keep, dtype=int), np.asarray(drop, dtype=int)
    akk = A[np.ix_(keep, keep)]
    if drop.size == 0:
        return akk
    akd = A[np.ix_(keep, drop)]
    return akk - akd @ spd_solve(A[np.ix_(drop, drop)], A[np.ix_(drop, keep)], label)


def cross_schur(A, rows, cols, drop, label: str = "information"):
    """``A_rc - A_rd A_dd^{-1} A_dc``; the off-diagonal dotted block."""
    A = np.asarray(A, dtype=float)
    rows, cols, drop = (np.asarray(x, dtype=int) for x in (rows, cols, drop))
    arc = A[np.ix_(rows, cols)]
    if drop.size == 0:
        return arc
    return arc - A[np.ix_(rows, drop)] @ spd_solve(A[np.ix_(drop, drop)], A[np.ix_(drop, cols)], label)
