"""Minimal sparse kernel layer: canonical CSR construction, products, builders, norms.

The storage type is ``scipy.sparse.csr_matrix`` throughout; matrices produced
here are canonical (sorted column indices within each row, duplicates summed,
explicit zeros dropped).  Dense matrices are plain ``numpy.ndarray``.
"""

from __future__ import annotations

import warnings
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "from_triplets",
    "matrix_entries",
    "spmv",
    "spmv_transpose",
    "kron",
    "tridiag",
    "frobenius_norm",
    "column_two_norms",
    "operator_two_norm",
]


def from_triplets(rows: int, cols: int,
                  entries: Iterable[tuple[int, int, float]]) -> sp.csr_matrix:
    """Build a canonical CSR matrix from (i, j, value) triplets.

    Duplicate coordinates are summed.  Entries whose value is exactly zero
    (before or after summing) are dropped so that the stored pattern is
    canonical and matrices compare structurally.
    """
    data = list(entries)
    if data:
        ii = np.asarray([e[0] for e in data], dtype=np.int64)
        jj = np.asarray([e[1] for e in data], dtype=np.int64)
        vv = np.asarray([e[2] for e in data], dtype=np.float64)
    else:
        ii = np.zeros(0, dtype=np.int64)
        jj = np.zeros(0, dtype=np.int64)
        vv = np.zeros(0, dtype=np.float64)
    if ii.size and (ii.min() < 0 or ii.max() >= rows or jj.min() < 0 or jj.max() >= cols):
        raise ValueError("triplet index out of bounds")
    m = sp.coo_matrix((vv, (ii, jj)), shape=(rows, cols)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def matrix_entries(m: sp.spmatrix) -> list[tuple[int, int, float]]:
    """Stored entries of ``m`` as (row, col, value) triplets in CSR order."""
    coo = m.tocoo()
    return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))


def spmv(m: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    """y = m @ x with an explicit dimension check."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.shape[1],):
        raise ValueError(f"dimension mismatch: matrix is {m.shape}, vector has shape {x.shape}")
    return m @ x


def spmv_transpose(m: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    """y = m.T @ x without materializing the transpose."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.shape[0],):
        raise ValueError(f"dimension mismatch: matrix is {m.shape}, vector has shape {x.shape}")
    # .T on CSR is a CSC view over the same arrays, no copy happens
    return m.T @ x


def kron(a: sp.spmatrix, b: sp.spmatrix) -> sp.csr_matrix:
    """Kronecker product a (x) b in canonical CSR form."""
    return sp.kron(a, b, format="csr")


def tridiag(p: int, lo: float, di: float, up: float, scale: float = 1.0) -> sp.csr_matrix:
    """p-by-p tridiagonal matrix with bands (lo, di, up), all entries times scale."""
    if p < 1:
        raise ValueError("tridiag requires p >= 1")
    diags = [np.full(p - 1, lo), np.full(p, di), np.full(p - 1, up)]
    m = sp.diags(diags, offsets=[-1, 0, 1], shape=(p, p), format="csr") * scale
    m = m.tocsr()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def frobenius_norm(m: sp.spmatrix) -> float:
    return float(np.sqrt(np.sum(np.square(m.tocsr().data)) if m.nnz else 0.0))


def column_two_norms(m: sp.spmatrix) -> np.ndarray:
    """Euclidean norm of each column. Zero columns yield 0 (callers must guard)."""
    sq = m.tocsr().copy()
    sq.data = sq.data ** 2
    return np.sqrt(np.asarray(sq.sum(axis=0)).ravel())


def operator_two_norm(apply: Callable[[np.ndarray], np.ndarray], dim: int,
                      tol: float = 1e-10, maxit: int = 5000,
                      adjoint: Callable[[np.ndarray], np.ndarray] | None = None) -> float:
    """Spectral norm of a linear map on R^dim by power iteration on F^T F.

    When no adjoint is supplied the operator is materialized densely (column by
    column), so the default path is intended for desk-scale dimensions.  If the
    iteration does not settle within ``maxit`` the current estimate is returned
    and a ``RuntimeWarning`` is issued.
    """
    if adjoint is None:
        cols = [apply(e) for e in np.eye(dim)]
        mat = np.column_stack(cols) if dim else np.zeros((0, 0))
        apply = lambda v: mat @ v          # noqa: E731
        adjoint = lambda v: mat.T @ v      # noqa: E731
    # fixed-seed start keeps the estimate deterministic call to call
    x = np.random.default_rng(0x5EED).standard_normal(dim)
    nx = np.linalg.norm(x)
    if nx == 0.0 or dim == 0:
        return 0.0
    x /= nx
    sigma = np.linalg.norm(apply(x))
    for _ in range(maxit):
        y = adjoint(apply(x))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        new = np.linalg.norm(apply(x))
        if abs(new - sigma) <= tol * max(new, 1e-300):
            return float(new)
        sigma = new
    warnings.warn(f"operator_two_norm: no convergence in {maxit} iterations, "
                  f"returning current estimate {sigma:.6e}", RuntimeWarning)
    return float(sigma)
