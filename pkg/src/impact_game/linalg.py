"""Dense kernels for the closed-form backend.

``mat_exp`` is a scaling-and-squaring Padé exponential (degree 3 to 13,
chosen from the 1-norm).  ``exp_integral`` uses the augmented-matrix
identity so that a singular generator is handled without inverting it.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import IllConditioned

PIVOT_FLOOR = 1e-14

_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ),
}
# largest 1-norm for which the degree-m approximant is accurate to unit roundoff
_THETA = ((3, 1.495585217958292e-2), (5, 2.539398330063230e-1),
          (7, 9.504178996162932e-1), (9, 2.097847961257068e0))
_THETA_13 = 5.371920351148152e0


def _as_square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _pade(A: np.ndarray, m: int) -> np.ndarray:
    c = _PADE_COEFFS[m]
    ident = np.eye(A.shape[0])
    A2 = A @ A
    if m < 13:
        powers = [ident, A2]
        for _ in range(2, (m + 1) // 2):
            powers.append(powers[-1] @ A2)
        U = sum(c[j] * powers[j // 2] for j in range(m, 0, -2))
        U = A @ U
        V = sum(c[j] * powers[j // 2] for j in range(m - 1, -1, -2))
    else:
        A4 = A2 @ A2
        A6 = A2 @ A4
        U = A @ (A6 @ (c[13] * A6 + c[11] * A4 + c[9] * A2)
                 + c[7] * A6 + c[5] * A4 + c[3] * A2 + c[1] * ident)
        V = (A6 @ (c[12] * A6 + c[10] * A4 + c[8] * A2)
             + c[6] * A6 + c[4] * A4 + c[2] * A2 + c[0] * ident)
    return np.linalg.solve(V - U, V + U)


def mat_exp(A, scale: float = 1.0) -> np.ndarray:
    """Return ``exp(scale * A)``."""
    A = _as_square(A) * float(scale)
    if A.size == 0:
        return A.copy()
    norm = np.linalg.norm(A, 1)
    for m, theta in _THETA:
        if norm <= theta:
            return _pade(A, m)
    s = max(0, int(np.ceil(np.log2(norm / _THETA_13)))) if norm > 0 else 0
    E = _pade(A / 2.0**s, 13)
    for _ in range(s):
        E = E @ E
    return E


def solve_linear(A, rhs, pivot_floor: float = PIVOT_FLOOR):
    """Solve ``A X = rhs`` by LU with partial pivoting.

    Returns ``(X, cond)`` where ``cond`` is the 1-norm condition number.
    Raises IllConditioned when a pivot falls below ``pivot_floor * ||A||``.
    """
    A = _as_square(A)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != A.shape[0]:
        raise ValueError(f"rhs with {rhs.shape[0]} rows does not match {A.shape[0]}x{A.shape[0]} matrix")
    norm = np.linalg.norm(A, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)  # singularity is reported below
        lu, piv = lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if norm == 0 or pivots.min() <= pivot_floor * norm:
        with np.errstate(all="ignore"):
            est = float(np.linalg.cond(A, 1)) if norm > 0 else float("inf")
        raise IllConditioned("matrix is singular to working precision", est if np.isfinite(est) else float("inf"))
    cond = float(np.linalg.cond(A, 1))
    return lu_solve((lu, piv), rhs, check_finite=False), cond


def exp_integral(A, c, t: float) -> np.ndarray:
    """``int_0^t exp(s A) c ds`` via the top-right block of ``exp(t [[A, c], [0, 0]])``."""
    A = _as_square(A)
    c = np.asarray(c, dtype=float)
    vector = c.ndim == 1
    c2 = c.reshape(-1, 1) if vector else c
    m = A.shape[0]
    if c2.ndim != 2 or c2.shape[0] != m:
        raise ValueError(f"c of shape {c.shape} does not match {m}x{m} matrix")
    k = c2.shape[1]
    aug = np.zeros((m + k, m + k))
    aug[:m, :m] = A
    aug[:m, m:] = c2
    out = mat_exp(aug, t)[:m, m:]
    return out[:, 0] if vector else out
