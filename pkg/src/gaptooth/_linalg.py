"""Batched dense solves, including an extended-precision fallback.

LAPACK only handles double precision, so the 80-bit path does its own
Gaussian elimination with partial pivoting, vectorized over the batch axis.
Systems here are small (a patch is at most a few dozen sites), so the
elimination loop is cheap.
"""

from __future__ import annotations

import numpy as np


def solve_batched(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A[e] x[e] = B[e] for every e; A is (E, m, m), B is (E, m)."""
    if A.dtype == np.clongdouble or B.dtype == np.clongdouble:
        return _solve_batched_pivoting(
            A.astype(np.clongdouble), B.astype(np.clongdouble)
        )
    return np.linalg.solve(A, B[:, :, None])[:, :, 0]


def _solve_batched_pivoting(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = A.copy()
    x = B.copy()
    n_batch, m, _ = A.shape
    batch = np.arange(n_batch)
    for k in range(m):
        pivot = np.argmax(np.abs(A[:, k:, k]), axis=1) + k
        needs_swap = pivot != k
        if np.any(needs_swap):
            rows = batch[needs_swap]
            piv = pivot[needs_swap]
            A[rows, k], A[rows, piv] = A[rows, piv].copy(), A[rows, k].copy()
            x[rows, k], x[rows, piv] = x[rows, piv].copy(), x[rows, k].copy()
        if np.any(A[:, k, k] == 0):
            raise np.linalg.LinAlgError("singular matrix in batched solve")
        factor = A[:, k + 1 :, k] / A[:, k, k][:, None]
        A[:, k + 1 :, k:] -= factor[:, :, None] * A[:, None, k, k:]
        x[:, k + 1 :] -= factor * x[:, k][:, None]
    for k in range(m - 1, -1, -1):
        x[:, k] = (x[:, k] - (A[:, k, k + 1 :] * x[:, k + 1 :]).sum(axis=1)) / A[
            :, k, k
        ]
    return x
