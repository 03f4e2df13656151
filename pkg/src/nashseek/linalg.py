"""Small dense linear-algebra helpers used by the certificate checks."""

from __future__ import annotations

import numpy as np

from .errors import SingularLyapunov


def lyapunov_solve(S: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve X S + S^T X = rhs for X by dense Kronecker vectorization.

    Both sides are d x d with d small (desk scale); the vectorized system
    has d^2 unknowns and is solved with one dense LU factorization.
    """
    d = S.shape[0]
    if S.shape != (d, d) or rhs.shape != (d, d):
        raise ValueError("lyapunov_solve expects square matrices of equal size")
    eye = np.eye(d)
    system = np.kron(S.T, eye) + np.kron(eye, S.T)
    try:
        vec = np.linalg.solve(system, rhs.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise SingularLyapunov(f"vectorized Lyapunov system is singular: {exc}") from exc
    if not np.all(np.isfinite(vec)):
        raise SingularLyapunov("vectorized Lyapunov solve produced non-finite entries")
    return vec.reshape(d, d, order="F")


def is_symmetric_positive_definite(M: np.ndarray) -> bool:
    """Cholesky test on the symmetrized matrix."""
    sym = 0.5 * (M + M.T)
    try:
        np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        return False
    return True
