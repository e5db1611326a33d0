import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from declnode import (
    DimensionMismatchError,
    NonFiniteError,
    TransportProblem,
    compare_vjp,
    fd_vjp,
    ot_backward,
    ot_forward,
)


class TestFdVjp:
    def test_linear_map(self, rng):
        x = rng.standard_normal(5)
        v = rng.standard_normal(5)
        out = fd_vjp(lambda u: 3.0 * u, x, v)
        np.testing.assert_allclose(out, 3.0 * v, atol=1e-9)

    def test_general_linear_map_recovers_vT_A(self, rng):
        # Linear maps have no truncation error; the only residual is the
        # rounding floor eps * scale / (2 h), so the achievable accuracy
        # improves with the step instead of degrading.
        a = rng.standard_normal((4, 6))
        x = rng.standard_normal(6)
        v = rng.standard_normal(4)
        norm_a = np.linalg.norm(a)
        for step in (1e-3, 1e-4):
            out = fd_vjp(lambda u: a @ u, x, v, step=step)
            assert np.abs(out - v @ a).max() <= 1e-12 * norm_a
        for step in (1e-7, 1e-5):
            out = fd_vjp(lambda u: a @ u, x, v, step=step)
            floor = np.finfo(float).eps * norm_a * np.linalg.norm(v) * 10 / step
            assert np.abs(out - v @ a).max() <= floor

    def test_mean_pooling(self, rng):
        n = 6
        x = rng.standard_normal(n)
        v = np.array([1.0])
        out = fd_vjp(lambda u: np.array([u.mean()]), x, v)
        np.testing.assert_allclose(out, np.full(n, 1.0 / n), atol=1e-10)

    def test_sign_symmetry(self, rng):
        a = rng.standard_normal((3, 3))
        x = rng.standard_normal(3)
        v = rng.standard_normal(3)
        plus = fd_vjp(lambda u: a @ u, x, v)
        minus = fd_vjp(lambda u: a @ u, x, -v)
        np.testing.assert_array_equal(plus, -minus)

    def test_transport_plan_entries_cross_check(self):
        prob = TransportProblem(
            np.array([[0.0, 1.0], [1.0, 0.0]]), [0.5, 0.5], [0.5, 0.5], 1.0
        )
        plan = ot_forward(prob, tol=1e-14)
        v = np.array([[0.7, -0.3], [0.1, 0.5]]).reshape(1, 2, 2)
        grads = ot_backward(prob, plan, v, "structured-block")

        def fwd(flat):
            p = TransportProblem(flat.reshape(1, 2, 2), prob.r, prob.c, 1.0)
            return ot_forward(p, tol=1e-14, max_iter=100_000).P

        numeric = fd_vjp(fwd, prob.M.ravel(), v.ravel())
        report = compare_vjp(grads.dJdM.ravel(), numeric, rtol=1e-4)
        assert report.passed

    def test_non_finite_detection(self):
        def bad(u):
            out = u.copy()
            if u[0] > 1.0:
                out[0] = np.nan
            return out

        with pytest.raises(NonFiniteError):
            fd_vjp(bad, np.array([1.0, 2.0]), np.array([1.0, 1.0]), step=0.5)


class TestCompareVjp:
    def test_identical_vectors_pass(self):
        report = compare_vjp([1.0, -2.0], [1.0, -2.0], rtol=1e-12)
        assert report.passed
        assert report.max_abs_err == 0.0
        assert report.max_rel_err == 0.0

    def test_tiny_perturbation_passes(self):
        report = compare_vjp([1.0], [1.0 + 1e-9], rtol=1e-5)
        assert report.passed

    def test_ten_percent_off_fails(self):
        report = compare_vjp([1.0], [1.1], rtol=1e-5)
        assert not report.passed
        assert report.max_rel_err == pytest.approx(0.1 / 1.1, rel=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            compare_vjp([1.0, 2.0], [1.0], rtol=1e-5)

    def test_passed_iff_max_rel_err_within_rtol(self, rng):
        analytic = rng.standard_normal(20)
        numeric = analytic + rng.standard_normal(20) * 1e-7
        report = compare_vjp(analytic, numeric, rtol=1e-5, atol=1e-9)
        assert report.passed == (report.max_rel_err <= 1e-5)

    @settings(deadline=None, max_examples=100)
    @given(
        value=st.floats(-1e6, 1e6),
        err=st.floats(0, 1e-3),
        rtol=st.floats(1e-9, 1e-2),
    )
    def test_agreement_definition(self, value, err, rtol):
        report = compare_vjp([value + err], [value], rtol=rtol)
        realized = abs((value + err) - value)  # what float64 actually stores
        expected = realized <= rtol * abs(value) if realized > 0 else True
        assert report.passed == expected

    def test_per_coordinate_report(self):
        report = compare_vjp([1.0, 2.0], [1.0, 2.2], rtol=1e-3,
                             keep_per_coordinate=True)
        assert report.per_coordinate is not None
        assert report.per_coordinate.shape == (2,)
        assert report.per_coordinate[0] == 0.0
