import numpy as np
import pytest

from declnode import (
    CholeskyFactor,
    DimensionMismatchError,
    NotPositiveDefiniteError,
    cholesky_factorize,
    cholesky_factorize_batch,
    cholesky_solve,
    cholesky_solve_batch,
)
from declnode.linalg import spd_invert_inplace, spd_solve_inplace


class TestFactorize:
    def test_identity(self):
        factor = cholesky_factorize(np.eye(3))
        np.testing.assert_array_equal(factor.lower, np.eye(3))
        assert factor.dim == 3

    def test_two_by_two(self):
        a = np.array([[4.0, 2.0], [2.0, 3.0]])
        factor = cholesky_factorize(a)
        np.testing.assert_allclose(
            factor.lower, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], rtol=1e-15
        )
        np.testing.assert_allclose(factor.lower @ factor.lower.T, a, rtol=1e-15)

    def test_indefinite_raises(self):
        with pytest.raises(NotPositiveDefiniteError):
            cholesky_factorize(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_regularization_recovers_indefinite(self):
        a = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3 and -1
        factor = cholesky_factorize(a, regularization=1.5)
        np.testing.assert_allclose(
            factor.lower @ factor.lower.T, a + 1.5 * np.eye(2), rtol=1e-14
        )

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            cholesky_factorize(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(DimensionMismatchError):
            cholesky_factorize(np.ones((2, 3)))

    def test_rejects_negative_regularization(self):
        with pytest.raises(ValueError):
            cholesky_factorize(np.eye(2), regularization=-1.0)

    def test_reconstruction_error(self, rng):
        for dim in (3, 17, 64):
            g = rng.standard_normal((dim, dim))
            a = g @ g.T + dim * np.eye(dim)
            factor = cholesky_factorize(a)
            err = np.linalg.norm(factor.lower @ factor.lower.T - a)
            assert err <= 1e-10 * np.linalg.norm(a)


class TestSolve:
    def test_scaled_identity(self, rng):
        factor = cholesky_factorize(2.0 * np.eye(4))
        v = rng.standard_normal(4)
        np.testing.assert_allclose(cholesky_solve(factor, v), v / 2.0, rtol=1e-15)

    def test_identity_matrix_rhs(self, rng):
        factor = cholesky_factorize(np.eye(3))
        rhs = rng.standard_normal((3, 5))
        np.testing.assert_allclose(cholesky_solve(factor, rhs), rhs, rtol=1e-15)

    def test_two_by_two_solve(self):
        factor = cholesky_factorize(np.array([[4.0, 2.0], [2.0, 3.0]]))
        x = cholesky_solve(factor, np.array([1.0, 0.0]))
        np.testing.assert_allclose(x, [3.0 / 8.0, -1.0 / 4.0], rtol=1e-14)

    def test_dimension_mismatch(self):
        factor = cholesky_factorize(np.eye(3))
        with pytest.raises(DimensionMismatchError):
            cholesky_solve(factor, np.ones(4))

    def test_round_trip_random_spd(self, rng):
        for dim in (2, 8, 33, 128, 512):
            g = rng.standard_normal((dim, dim))
            a = g.T @ g + np.eye(dim)
            x = rng.standard_normal(dim)
            factor = cholesky_factorize(a)
            recovered = cholesky_solve(factor, a @ x)
            assert np.linalg.norm(recovered - x) <= 1e-8 * max(np.linalg.norm(x), 1.0)

    def test_solve_residual(self, rng):
        for dim in (4, 64, 256):
            g = rng.standard_normal((dim, dim))
            a = g.T @ g + np.eye(dim)
            rhs = rng.standard_normal(dim)
            w = cholesky_solve(cholesky_factorize(a), rhs)
            assert np.linalg.norm(a @ w - rhs) <= 1e-9 * np.linalg.norm(rhs)


class TestBatched:
    def test_batched_matches_sequential_bitwise(self, rng):
        stack = np.empty((4, 6, 6))
        for i in range(4):
            g = rng.standard_normal((6, 6))
            stack[i] = g @ g.T + 6 * np.eye(6)
        rhs = rng.standard_normal((4, 6))
        factors = cholesky_factorize_batch(stack)
        batched = cholesky_solve_batch(factors, rhs)
        for i in range(4):
            single = cholesky_solve(cholesky_factorize(stack[i]), rhs[i])
            np.testing.assert_array_equal(batched[i], single)

    def test_batch_shape_checks(self):
        with pytest.raises(DimensionMismatchError):
            cholesky_factorize_batch(np.eye(3))
        factors = cholesky_factorize_batch(np.stack([np.eye(2)] * 3))
        with pytest.raises(DimensionMismatchError):
            cholesky_solve_batch(factors, np.ones((2, 2)))


class TestInplaceHelpers:
    def test_solve_inplace_matches_public(self, rng):
        g = rng.standard_normal((9, 9))
        a = g @ g.T + 9 * np.eye(9)
        b = rng.standard_normal(9)
        expected = cholesky_solve(cholesky_factorize(a), b)
        buf_a = a.copy()
        buf_b = b.copy()
        out = spd_solve_inplace(buf_a, buf_b)
        assert out is buf_b or np.shares_memory(out, buf_b)
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_invert_inplace(self, rng):
        g = rng.standard_normal((7, 7))
        a = g @ g.T + 7 * np.eye(7)
        buf = a.copy()
        spd_invert_inplace(buf)
        np.testing.assert_allclose(buf, np.linalg.inv(a), rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(buf, buf.T, rtol=0, atol=0)

    def test_solve_inplace_raises_on_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            spd_solve_inplace(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))

    def test_inplace_helpers_float32(self, rng):
        # LAPACK routine selection must follow the dtype; a silent f2py
        # copy-and-cast would leave the factor in a temporary.
        g = rng.standard_normal((5, 5))
        a = (g @ g.T + 5 * np.eye(5)).astype(np.float32)
        b = rng.standard_normal(5).astype(np.float32)
        expected = np.linalg.solve(a.astype(np.float64), b.astype(np.float64))
        out = spd_solve_inplace(a.copy(), b.copy())
        assert out.dtype == np.float32
        np.testing.assert_allclose(out, expected, rtol=1e-5)
        inv = a.copy()
        spd_invert_inplace(inv)
        np.testing.assert_allclose(
            inv, np.linalg.inv(a.astype(np.float64)), rtol=1e-4, atol=1e-6
        )


def test_factor_dataclass_fields():
    factor = cholesky_factorize(np.eye(2))
    assert isinstance(factor, CholeskyFactor)
    assert factor.lower.shape == (2, 2)
    assert (np.diag(factor.lower) > 0).all()
