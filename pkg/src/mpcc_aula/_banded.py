"""Block-tridiagonal SPD solves through LAPACK banded Cholesky."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import solveh_banded


@lru_cache(maxsize=32)
def _scatter_index(T: int, n: int):
    u = 2 * n - 1 if T > 1 else n - 1
    a, b = np.triu_indices(n)
    t = np.repeat(np.arange(T), a.size)
    d_rows = np.tile(u + a - b, T)
    d_cols = t * n + np.tile(b, T)
    d_src = (t, np.tile(a, T), np.tile(b, T))
    if T > 1:
        aa, bb = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        aa, bb = aa.ravel(), bb.ravel()
        to = np.repeat(np.arange(T - 1), aa.size)
        o_rows = np.tile(u + aa - n - bb, T - 1)
        o_cols = (to + 1) * n + np.tile(bb, T - 1)
        o_src = (to, np.tile(aa, T - 1), np.tile(bb, T - 1))
    else:
        o_rows = o_cols = np.zeros(0, dtype=int)
        o_src = None
    return u, (d_rows, d_cols, d_src), (o_rows, o_cols, o_src)


def to_banded(diag: np.ndarray, upper: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """Upper banded storage of the block-tridiagonal matrix plus ``shift * I``."""
    T, n, _ = diag.shape
    u, (dr, dc, ds), (orow, oc, osrc) = _scatter_index(T, n)
    ab = np.zeros((u + 1, T * n))
    ab[dr, dc] = diag[ds]
    if osrc is not None:
        ab[orow, oc] = upper[osrc]
    ab[u] += shift
    return ab


def solve_block_tridiagonal(diag, upper, rhs, shift: float = 0.0) -> np.ndarray:
    """Solve ``(M + shift I) x = rhs``; raises ``LinAlgError`` if not positive definite."""
    ab = to_banded(diag, upper, shift)
    return solveh_banded(ab, rhs, lower=False, check_finite=False)


def dense_from_blocks(diag, upper) -> np.ndarray:
    T, n, _ = diag.shape
    M = np.zeros((T * n, T * n))
    for t in range(T):
        M[t * n:(t + 1) * n, t * n:(t + 1) * n] = diag[t]
        if t < T - 1:
            M[t * n:(t + 1) * n, (t + 1) * n:(t + 2) * n] = upper[t]
            M[(t + 1) * n:(t + 2) * n, t * n:(t + 1) * n] = upper[t].T
    return M
