"""Symmetric sparse matrices and their banded LDL^T factorization.

Only the lower triangle is stored.  Factorization permutes with a
bandwidth-reducing ordering (reverse Cuthill-McKee) when that actually
shrinks the band, packs the matrix into banded storage and runs the
numba LDL^T kernel.  A process-wide counter tracks factorization calls
so higher-level stages can account for their solver work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite
from scipy.sparse.csgraph import reverse_cuthill_mckee

from ._kernels import band_ldl_factor, band_ldl_solve

PIVOT_RTOL = 1e-14  # pivot <= PIVOT_RTOL * max diagonal counts as non-positive

_counters = {"factor": 0}


class PivotError(np.linalg.LinAlgError):
    """Non-positive pivot: unconstrained rigid-body mode or corrupt assembly."""

    def __init__(self, index: int, value: float):
        self.index = int(index)
        self.value = float(value)
        super().__init__(f"non-positive pivot at index {self.index} (value {self.value:.6e})")


def factorization_count() -> int:
    """Number of factor_spd calls since the last reset."""
    return _counters["factor"]


def reset_factorization_count() -> None:
    _counters["factor"] = 0


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class SparseSymMatrix:
    """h x h symmetric matrix; the lower triangle lives in a CSR matrix."""

    __slots__ = ("h", "lower")

    def __init__(self, lower: sp.spmatrix, h: int):
        if h < 1:
            raise ValueError(f"dimension must be >= 1, got {h}")
        lower = sp.csr_matrix(lower, shape=(h, h), copy=True)
        lower.sum_duplicates()
        lower.sort_indices()
        coo = lower.tocoo()
        if np.any(coo.col > coo.row):
            raise ValueError("entries above the diagonal are not allowed in lower storage")
        if not np.all(np.isfinite(lower.data)):
            raise ValueError("matrix entries must be finite")
        _freeze(lower.data)
        _freeze(lower.indices)
        _freeze(lower.indptr)
        self.h = h
        self.lower = lower

    def diagonal(self) -> np.ndarray:
        return self.lower.diagonal()

    def to_dense(self) -> np.ndarray:
        low = self.lower.toarray()
        return low + low.T - np.diag(np.diag(low))

    def full_csr(self) -> sp.csr_matrix:
        """Symmetrically expanded CSR (both triangles)."""
        return (self.lower + sp.triu(self.lower.T, k=1)).tocsr()

    @property
    def nnz_lower(self) -> int:
        return self.lower.nnz

    def __repr__(self) -> str:
        return f"SparseSymMatrix(h={self.h}, nnz_lower={self.lower.nnz})"


def assemble(rows, cols, values, h: int) -> SparseSymMatrix:
    """Accumulate symmetric triplets into a matrix.

    (i, j) and (j, i) address the same stored entry; duplicates are summed
    and exact zeros after accumulation are dropped.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    if not (rows.shape == cols.shape == values.shape):
        raise ValueError("rows, cols and values must have matching lengths")
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= h or cols.max() >= h):
        raise IndexError(f"triplet index out of range for dimension {h}")
    if not np.all(np.isfinite(values)):
        raise ValueError("triplet values must be finite")
    lo_r = np.maximum(rows, cols)
    lo_c = np.minimum(rows, cols)
    lower = sp.coo_matrix((values, (lo_r, lo_c)), shape=(h, h)).tocsr()
    lower.sum_duplicates()
    lower.eliminate_zeros()
    return SparseSymMatrix(lower, h)


def matvec(A: SparseSymMatrix, x: np.ndarray) -> np.ndarray:
    """y = A x with symmetric expansion of the stored triangle."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.h,):
        raise ValueError(f"vector length {x.shape} does not match dimension {A.h}")
    y = A.lower @ x
    y += A.lower.T @ x
    y -= A.diagonal() * x
    return y


def lincomb(terms) -> SparseSymMatrix:
    """Sum of (coefficient, matrix) pairs on the union sparsity pattern."""
    terms = list(terms)
    if not terms:
        raise ValueError("need at least one term")
    h = terms[0][1].h
    acc = None
    for c, A in terms:
        if A.h != h:
            raise ValueError("dimension mismatch in linear combination")
        part = A.lower * float(c)
        acc = part if acc is None else acc + part
    acc = acc.tocsr()
    acc.eliminate_zeros()
    return SparseSymMatrix(acc, h)


@dataclass(frozen=True)
class Factorization:
    """Banded LDL^T factor of a SparseSymMatrix.

    ``perm`` maps factor position -> original index; row 0 of ``band``
    holds the pivots D, rows k >= 1 the k-th subdiagonal of the unit
    lower factor.  Immutable: repeated solves are bit-identical.
    """

    h: int
    perm: np.ndarray
    band: np.ndarray
    bandwidth: int

    def pivots(self) -> np.ndarray:
        return self.band[0].copy()

    def unit_lower_dense(self) -> np.ndarray:
        """Dense unit-lower factor in permuted order (debugging, small h)."""
        L = np.eye(self.h)
        for k in range(1, self.bandwidth + 1):
            for j in range(self.h - k):
                L[j + k, j] = self.band[k, j]
        return L

    def reconstruct_dense(self) -> np.ndarray:
        """P L D L^T P^T in original order (debugging, small h)."""
        L = self.unit_lower_dense()
        A = L @ np.diag(self.pivots()) @ L.T
        out = np.empty_like(A)
        out[np.ix_(self.perm, self.perm)] = A
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return solve(self, rhs)


def _half_bandwidth(rows: np.ndarray, cols: np.ndarray) -> int:
    if rows.size == 0:
        return 0
    return int(np.max(rows - cols))


def factor_spd(A: SparseSymMatrix) -> Factorization:
    """LDL^T-factor a symmetric positive definite matrix.

    Raises PivotError (with the offending original index) when a pivot
    falls below PIVOT_RTOL times the largest diagonal entry.
    """
    _counters["factor"] += 1
    h = A.h
    coo = A.lower.tocoo()
    bw_natural = _half_bandwidth(coo.row, coo.col)

    perm = np.arange(h)
    bw = bw_natural
    if h > 2 and bw_natural > 1:
        cand = np.asarray(reverse_cuthill_mckee(A.full_csr(), symmetric_mode=True), dtype=np.int64)
        rank = np.empty(h, dtype=np.int64)
        rank[cand] = np.arange(h)
        bw_cand = int(np.max(np.abs(rank[coo.row] - rank[coo.col]))) if coo.row.size else 0
        if bw_cand < bw_natural:
            perm, bw = cand, bw_cand

    rank = np.empty(h, dtype=np.int64)
    rank[perm] = np.arange(h)
    pi = rank[coo.row]
    pj = rank[coo.col]
    lo_r = np.maximum(pi, pj)
    lo_c = np.minimum(pi, pj)

    band = np.zeros((bw + 1, h))
    band[lo_r - lo_c, lo_c] = coo.data

    diag = A.diagonal()
    tol = PIVOT_RTOL * float(diag.max()) if h else 0.0
    fail = band_ldl_factor(band, tol)
    if fail >= 0:
        raise PivotError(index=int(perm[fail]), value=float(band[0, fail]))
    return Factorization(h=h, perm=_freeze(perm), band=_freeze(band), bandwidth=bw)


def solve(F: Factorization, rhs: np.ndarray) -> np.ndarray:
    """x with A x = rhs for the factored matrix."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (F.h,):
        raise ValueError(f"rhs length {rhs.shape} does not match dimension {F.h}")
    y = band_ldl_solve(F.band, rhs[F.perm])
    out = np.empty(F.h)
    out[F.perm] = y
    return out


def save_matrix_market(A: SparseSymMatrix, path) -> None:
    mmwrite(path, A.full_csr(), symmetry="symmetric")


def load_matrix_market(path) -> SparseSymMatrix:
    full = sp.csr_matrix(mmread(path))
    if full.shape[0] != full.shape[1]:
        raise ValueError("matrix market file does not hold a square matrix")
    return SparseSymMatrix(sp.tril(full, format="csr"), full.shape[0])
