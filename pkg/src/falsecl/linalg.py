"""Deterministic dense float64 matrix arithmetic.

Matrices are plain 2-D numpy arrays (row-major, dtype float64). The matmul
here deliberately avoids BLAS: it accumulates rank-1 updates in ascending
index order, so results are bit-identical across runs, machines with
different BLAS builds, and thread counts. At the batch sizes this package
works with, that costs nothing that matters.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError, ZeroRowError

ZERO_ROW_TOL = 1e-12


def as_matrix(a) -> np.ndarray:
    """Coerce input to a 2-D float64 array (copying only if needed)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D array, got ndim={m.ndim}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with a fixed ascending-k summation order.

    Equivalent to the scalar triple loop
        out[i, j] = sum_k a[i, k] * b[k, j]
    accumulated for k = 0, 1, ... in that exact order, so the result is
    bit-identical to that reference loop.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul: inner dims differ ({a.shape} x {b.shape})"
        )
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for k in range(a.shape[1]):
        # rank-1 update; elementwise ops keep one add-chain per entry
        out += a[:, k, np.newaxis] * b[np.newaxis, k, :]
    return out


def gram(a: np.ndarray) -> np.ndarray:
    """All pairwise dot products a @ a.T.

    Symmetric by construction: entry (i, j) and (j, i) run the same
    multiply/add sequence.
    """
    a = as_matrix(a)
    return matmul(a, a.T)


def row_norms(m: np.ndarray) -> np.ndarray:
    """Euclidean norm of every row."""
    m = as_matrix(m)
    return np.sqrt(np.sum(m * m, axis=1))


def l2_normalize_rows(m: np.ndarray) -> np.ndarray:
    """Scale every row to unit Euclidean norm.

    Raises ZeroRowError if any row norm is <= 1e-12; such a row signals a
    degenerate embedding upstream and must not be silently patched.
    """
    m = as_matrix(m)
    norms = row_norms(m)
    bad = np.flatnonzero(norms <= ZERO_ROW_TOL)
    if bad.size:
        raise ZeroRowError(f"row {bad[0]} has norm {norms[bad[0]]:.3e}")
    return m / norms[:, np.newaxis]
