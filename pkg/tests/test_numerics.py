import math

import numpy as np
import pytest
import scipy.sparse as sp

from surfremap.errors import DimensionMismatchError, NonFiniteError, SingularMatrixError
from surfremap.numerics import (
    SparseOperator,
    cond_estimate_1norm,
    qrcp,
    solve_truncated,
    spmv,
)


def exact_cond_1norm(R):
    Rinv = np.linalg.inv(R)
    return np.linalg.norm(R, 1) * np.linalg.norm(Rinv, 1)


class TestQrcp:
    def test_identity(self):
        f = qrcp(np.eye(3))
        assert np.allclose(f.Q, np.eye(3))
        assert np.allclose(f.R, np.eye(3))
        assert sorted(f.perm.tolist()) == [0, 1, 2]
        assert np.allclose(np.eye(3)[:, f.perm], f.Q @ f.R)

    def test_diagonal_pivoting(self):
        A = np.diag([1.0, 3.0, 2.0])
        f = qrcp(A)
        assert f.perm[0] == 1  # largest column first
        assert np.allclose(np.abs(np.diag(f.R)), [3.0, 2.0, 1.0])

    def test_random_reconstruction(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((20, 6))
        f = qrcp(A)
        resid = np.abs(A[:, f.perm] - f.Q @ f.R).max()
        assert resid < 5e-14 * np.abs(A).max()

    def test_property_sweep(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            n = int(rng.integers(1, 29))
            m = int(rng.integers(n, 61))
            A = rng.standard_normal((m, n)) * 10.0 ** rng.integers(-3, 4)
            f = qrcp(A)
            assert np.abs(f.Q.T @ f.Q - np.eye(n)).max() < 1e-12
            assert np.abs(A[:, f.perm] - f.Q @ f.R).max() <= 5e-14 * max(np.abs(A).max(), 1e-30)
            d = np.abs(np.diag(f.R))
            assert np.all(d[:-1] >= d[1:] - 1e-15 * d[0])
            assert np.allclose(np.tril(f.R, -1), 0.0)

    def test_rejects_nonfinite(self):
        A = np.ones((3, 2))
        A[1, 1] = np.nan
        with pytest.raises(NonFiniteError):
            qrcp(A)

    def test_rejects_wide(self):
        with pytest.raises(DimensionMismatchError):
            qrcp(np.ones((2, 5)))


class TestCondEstimate:
    def test_identity(self):
        assert cond_estimate_1norm(np.eye(4)) == pytest.approx(1.0)

    def test_diagonal(self):
        est = cond_estimate_1norm(np.diag([1.0, 1e-8]))
        assert 1e8 / 3 <= est <= 3e8

    def test_random_triangular_within_factor_3(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            R = np.triu(rng.standard_normal((6, 6)))
            R[np.diag_indices(6)] += np.sign(np.diag(R)) * 0.5
            exact = exact_cond_1norm(R)
            est = cond_estimate_1norm(R)
            assert exact / 3 <= est <= 3 * exact

    def test_zero_diagonal_is_infinite(self):
        R = np.triu(np.ones((3, 3)))
        R[1, 1] = 0.0
        assert cond_estimate_1norm(R) == math.inf


class TestSolveTruncated:
    def test_square_exact(self):
        rng = np.random.default_rng(11)
        A = rng.standard_normal((5, 5)) + 5 * np.eye(5)
        b = rng.standard_normal(5)
        x = solve_truncated(qrcp(A), np.ones(5), b)
        assert np.abs(A @ x - b).max() < 1e-12

    def test_overdetermined_recovery(self):
        rng = np.random.default_rng(12)
        A = rng.standard_normal((30, 6))
        x0 = rng.standard_normal(6)
        x = solve_truncated(qrcp(A), np.ones(6), A @ x0)
        assert np.abs(x - x0).max() < 1e-10

    def test_scaling_and_permutation_undone(self):
        rng = np.random.default_rng(13)
        A = rng.standard_normal((20, 5))
        t = np.array([1.0, 10.0, 0.1, 2.0, 5.0])
        x0 = rng.standard_normal(5)
        b = (A * t) @ x0
        x = solve_truncated(qrcp(A * t), t, b)
        # x solves the unscaled problem: A @ x = (A T) (T^-1 x) = b
        assert np.abs(A @ x - b).max() < 1e-10

    def test_rank_deficient_matches_pseudoinverse_residual(self):
        rng = np.random.default_rng(14)
        base = rng.standard_normal((25, 5))
        A = np.column_stack([base, base[:, 2]])  # duplicated column, rank 5
        b = rng.standard_normal(25)
        x = solve_truncated(qrcp(A), np.ones(6), b, drop_to=5)
        r_trunc = np.linalg.norm(A @ x - b)
        r_pinv = np.linalg.norm(A @ np.linalg.pinv(A) @ b - b)
        assert abs(r_trunc - r_pinv) < 1e-10

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            m, n = int(rng.integers(8, 40)), int(rng.integers(2, 8))
            m = max(m, n)
            A = rng.standard_normal((m, n))
            b = rng.standard_normal(m)
            x = solve_truncated(qrcp(A), np.ones(n), b)
            x_ne = np.linalg.solve(A.T @ A, A.T @ b)
            assert np.abs(x - x_ne).max() < 1e-8 * max(1.0, np.abs(x_ne).max())

    def test_singular_retained_block(self):
        A = np.zeros((4, 2))
        A[:, 0] = [1.0, 2.0, 3.0, 4.0]
        f = qrcp(A)
        with pytest.raises(SingularMatrixError):
            solve_truncated(f, np.ones(2), np.ones(4), drop_to=2)


class TestSparseOperator:
    def test_identity(self):
        op = SparseOperator.from_scipy(sp.eye(5, format="csr"))
        x = np.arange(5.0)
        assert np.array_equal(spmv(op, x), x)

    def test_all_ones_row(self):
        op = SparseOperator.from_rows((1, 4), [(np.arange(4), np.ones(4))])
        x = np.array([1.0, 2.0, 3.0, 4.0])
        assert spmv(op, x)[0] == pytest.approx(10.0)

    def test_against_dense(self):
        rng = np.random.default_rng(21)
        dense = rng.standard_normal((50, 30)) * (rng.random((50, 30)) < 0.15)
        op = SparseOperator.from_scipy(sp.csr_matrix(dense))
        x = rng.standard_normal(30)
        row_sum = np.abs(dense).sum(axis=1).max()
        assert np.abs(spmv(op, x) - dense @ x).max() < 1e-14 * np.abs(x).max() * max(row_sum, 1)

    def test_linearity(self):
        rng = np.random.default_rng(22)
        dense = rng.standard_normal((40, 25)) * (rng.random((40, 25)) < 0.2)
        op = SparseOperator.from_scipy(sp.csr_matrix(dense))
        x, y = rng.standard_normal(25), rng.standard_normal(25)
        a, b = 2.5, -1.25
        lhs = spmv(op, a * x + b * y)
        rhs = a * spmv(op, x) + b * spmv(op, y)
        scale = max(np.abs(rhs).max(), 1e-30)
        assert np.abs(lhs - rhs).max() < 1e-13 * scale

    def test_dimension_mismatch(self):
        op = SparseOperator.from_scipy(sp.eye(3, format="csr"))
        with pytest.raises(DimensionMismatchError):
            spmv(op, np.ones(4))

    def test_csr_invariants(self):
        rng = np.random.default_rng(23)
        dense = rng.standard_normal((10, 10)) * (rng.random((10, 10)) < 0.3)
        op = SparseOperator.from_scipy(sp.csr_matrix(dense))
        assert np.all(np.diff(op.indptr) >= 0)
        for i in range(10):
            cols, _ = op.row(i)
            assert np.all(np.diff(cols) > 0)
            if cols.size:
                assert cols.min() >= 0 and cols.max() < 10
