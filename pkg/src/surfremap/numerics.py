"""Dense rank-revealing factorizations and sparse kernels.

This module wraps LAPACK's pivoted QR (``geqp3``) and triangular condition
estimator (``trcon``) behind the small surface the fitting code needs, and
provides a CSR sparse operator for row-per-target transfer maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import DimensionMismatchError, NonFiniteError, SingularMatrixError

__all__ = [
    "QrcpFactors",
    "SparseOperator",
    "qrcp",
    "cond_estimate_1norm",
    "solve_truncated",
    "spmv",
]


@dataclass(frozen=True)
class QrcpFactors:
    """Economic pivoted QR factorization A P = Q R.

    ``Q`` is m-by-n with orthonormal columns, ``R`` is n-by-n upper
    triangular with non-increasing diagonal magnitudes, and ``perm[j]`` is
    the original column sitting at pivoted position ``j``.
    """

    Q: np.ndarray
    R: np.ndarray
    perm: np.ndarray
    numerical_rank: int

    @property
    def ncols(self) -> int:
        return self.R.shape[0]


def qrcp(A: np.ndarray) -> QrcpFactors:
    """QR factorization with column pivoting of an m >= n matrix.

    Raises NonFiniteError on NaN/inf input.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionMismatchError(f"expected a nonempty 2-d matrix, got shape {A.shape}")
    m, n = A.shape
    if m < n:
        raise DimensionMismatchError(f"expected rows >= cols, got {m} x {n}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError("matrix contains non-finite entries")
    Q, R, perm = la.qr(A, mode="economic", pivoting=True, check_finite=False)
    rdiag = np.abs(np.diag(R))
    tol = max(m, n) * np.finfo(float).eps * (rdiag[0] if rdiag.size else 0.0)
    rank = int(np.count_nonzero(rdiag > tol))
    return QrcpFactors(Q=Q, R=R, perm=perm, numerical_rank=rank)


_trcon = None


def cond_estimate_1norm(R: np.ndarray) -> float:
    """Estimate the 1-norm condition number of an upper-triangular matrix.

    Uses LAPACK's Higham-style estimator; the result is within a small
    constant factor of the true kappa_1(R). Returns +inf if any diagonal
    entry is exactly zero.
    """
    global _trcon
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {R.shape}")
    if R.shape[0] == 0:
        return 1.0
    if np.any(np.diag(R) == 0.0):
        return math.inf
    if _trcon is None:
        (_trcon,) = la.get_lapack_funcs(("trcon",), (R,))
    rcond, info = _trcon(R, norm="1", uplo="U", diag="N")
    if info != 0:
        raise SingularMatrixError(f"trcon failed with info={info}")
    if rcond <= 0.0:
        return math.inf
    return 1.0 / float(rcond)


def solve_truncated(
    factors: QrcpFactors,
    T: np.ndarray,
    rhs: np.ndarray,
    drop_to: int | None = None,
) -> np.ndarray:
    """Least-squares solve keeping only the first ``drop_to`` pivoted columns.

    ``T`` is the diagonal column-equilibration scaling (as a vector). The
    returned coefficients are unscaled by ``T`` and in the original column
    order, with dropped coefficients set to zero.
    """
    n = factors.ncols
    if drop_to is None:
        drop_to = n
    if not 1 <= drop_to <= n:
        raise DimensionMismatchError(f"drop_to={drop_to} outside [1, {n}]")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (factors.Q.shape[0],):
        raise DimensionMismatchError(
            f"rhs length {rhs.shape} does not match {factors.Q.shape[0]} rows"
        )
    R1 = factors.R[:drop_to, :drop_to]
    if np.any(np.diag(R1) == 0.0):
        raise SingularMatrixError("retained triangular block has a zero diagonal entry")
    y = la.solve_triangular(R1, factors.Q[:, :drop_to].T @ rhs, check_finite=False)
    x = np.zeros(n)
    x[factors.perm[:drop_to]] = y
    return np.asarray(T, dtype=float) * x


class SparseOperator:
    """Row-per-target sparse linear map in CSR form.

    Column indices are strictly increasing within each row (canonical CSR).
    Instances are immutable after construction and safe for concurrent
    reads.
    """

    def __init__(self, shape, indptr, indices, data):
        mat = sp.csr_matrix((data, indices, indptr), shape=shape)
        mat.sum_duplicates()
        mat.sort_indices()
        self._mat = mat

    @classmethod
    def from_rows(cls, shape, rows) -> "SparseOperator":
        """Build from an iterable of (column_indices, values) per row."""
        indptr = np.zeros(shape[0] + 1, dtype=np.int64)
        cols, vals = [], []
        for i, (idx, v) in enumerate(rows):
            indptr[i + 1] = indptr[i] + len(idx)
            cols.append(np.asarray(idx, dtype=np.int64))
            vals.append(np.asarray(v, dtype=float))
        indices = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
        data = np.concatenate(vals) if vals else np.zeros(0)
        return cls(shape, indptr, indices, data)

    @classmethod
    def from_scipy(cls, mat) -> "SparseOperator":
        mat = sp.csr_matrix(mat)
        return cls(mat.shape, mat.indptr, mat.indices, mat.data)

    @property
    def shape(self):
        return self._mat.shape

    @property
    def indptr(self) -> np.ndarray:
        return self._mat.indptr

    @property
    def indices(self) -> np.ndarray:
        return self._mat.indices

    @property
    def data(self) -> np.ndarray:
        return self._mat.data

    def row(self, i: int):
        """Return (column_indices, values) of row i."""
        lo, hi = self._mat.indptr[i], self._mat.indptr[i + 1]
        return self._mat.indices[lo:hi], self._mat.data[lo:hi]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return spmv(self, x)

    def to_scipy(self) -> sp.csr_matrix:
        return self._mat


def spmv(op: SparseOperator, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product op @ x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (op.shape[1],):
        raise DimensionMismatchError(
            f"vector length {x.shape} does not match operator width {op.shape[1]}"
        )
    return op.to_scipy() @ x
