import numpy as np
import pytest

from declnode import (
    NodeSpec,
    RankDeficientConstraintsError,
    StationarityWarning,
    assemble_derivatives,
    solution_jacobian,
    unconstrained_solution_jacobian,
)


def make_least_squares_spec(dim):
    """f(x, u) = ||u - x||^2 / 2, solved by u = x."""

    def objective(x, u):
        d = u - x
        return 0.5 * float(d @ d)

    return NodeSpec(n_in=dim, m_out=dim, p_constraints=0, objective=objective)


def make_projection_spec():
    """f = ||u||^2 subject to 1^T u = x (m = 3, p = 1), solved by u = (x/3) 1."""

    def objective(x, u):
        return float(u @ u)

    def constraints(x, u):
        return np.array([u.sum() - x[0]])

    return NodeSpec(
        n_in=1, m_out=3, p_constraints=1, objective=objective, constraints=constraints
    )


class TestAssembly:
    def test_unconstrained_least_squares_blocks(self):
        spec = make_least_squares_spec(3)
        x = np.array([0.4, -1.2, 2.0])
        blocks = assemble_derivatives(spec, x, x.copy())
        np.testing.assert_allclose(blocks.hessian, np.eye(3), atol=1e-6)
        np.testing.assert_allclose(blocks.mixed, -np.eye(3), atol=1e-6)
        assert blocks.multipliers.size == 0
        assert blocks.constraint_jac_y.shape == (0, 3)
        assert blocks.stationarity_residual <= 1e-8

    def test_constrained_projection_blocks(self):
        spec = make_projection_spec()
        x = np.array([2.1])
        y = np.full(3, x[0] / 3.0)
        blocks = assemble_derivatives(spec, x, y)
        np.testing.assert_allclose(blocks.constraint_jac_y, np.ones((1, 3)), atol=1e-8)
        np.testing.assert_allclose(blocks.hessian, 2.0 * np.eye(3), atol=1e-5)
        np.testing.assert_allclose(blocks.mixed, np.zeros((3, 1)), atol=1e-5)
        np.testing.assert_allclose(blocks.constraint_jac_x, [[-1.0]], atol=1e-8)
        np.testing.assert_allclose(blocks.multipliers, [2.0 * x[0] / 3.0], rtol=1e-7)

    def test_transport_constraint_jacobian_layout(self):
        # Marginal constraints of a 2x2 plan with the first row constraint
        # dropped: rows [row 2 sums, col 1 sums, col 2 sums] over the
        # rowwise-flattened plan.
        r = np.array([0.4, 0.6])
        c = np.array([0.3, 0.7])

        def objective(x, u):
            P = u.reshape(2, 2)
            return float((P * x.reshape(2, 2)).sum())

        def constraints(x, u):
            P = u.reshape(2, 2)
            return np.concatenate([(P.sum(axis=1) - r)[1:], P.sum(axis=0) - c])

        spec = NodeSpec(n_in=4, m_out=4, p_constraints=3,
                        objective=objective, constraints=constraints)
        # With zero costs the objective vanishes identically, so the product
        # plan is optimal and assembly proceeds without warnings.
        y = np.outer(r, c).ravel()
        x = np.zeros(4)
        blocks = assemble_derivatives(spec, x, y)
        expected = np.array(
            [[0.0, 0.0, 1.0, 1.0], [1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]
        )
        np.testing.assert_allclose(blocks.constraint_jac_y, expected, atol=1e-8)

    def test_rank_deficient_constraints_detected(self):
        def objective(x, u):
            return float(u @ u)

        def constraints(x, u):
            return np.array([u.sum() - x[0], 2.0 * (u.sum() - x[0])])

        spec = NodeSpec(n_in=1, m_out=3, p_constraints=2,
                        objective=objective, constraints=constraints)
        with pytest.raises(RankDeficientConstraintsError):
            assemble_derivatives(spec, np.array([1.0]), np.full(3, 1 / 3))

    def test_warns_off_stationarity(self):
        spec = make_least_squares_spec(2)
        with pytest.warns(StationarityWarning):
            assemble_derivatives(spec, np.zeros(2), np.ones(2))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            NodeSpec(n_in=1, m_out=2, p_constraints=2, objective=lambda x, u: 0.0,
                     constraints=lambda x, u: np.zeros(2))
        with pytest.raises(ValueError):
            NodeSpec(n_in=1, m_out=2, p_constraints=1, objective=lambda x, u: 0.0)


class TestSolutionJacobian:
    def test_unconstrained_least_squares_is_identity(self):
        spec = make_least_squares_spec(3)
        x = np.array([0.4, -1.2, 2.0])
        blocks = assemble_derivatives(spec, x, x.copy())
        np.testing.assert_allclose(solution_jacobian(blocks), np.eye(3), atol=1e-6)

    def test_projection_jacobian(self):
        spec = make_projection_spec()
        x = np.array([2.1])
        y = np.full(3, x[0] / 3.0)
        blocks = assemble_derivatives(spec, x, y)
        np.testing.assert_allclose(
            solution_jacobian(blocks), np.full((3, 1), 1.0 / 3.0), atol=1e-6
        )

    def test_constraint_tangency(self):
        spec = make_projection_spec()
        x = np.array([-0.7])
        y = np.full(3, x[0] / 3.0)
        blocks = assemble_derivatives(spec, x, y)
        jac = solution_jacobian(blocks)
        residual = blocks.constraint_jac_y @ jac + blocks.constraint_jac_x
        np.testing.assert_allclose(residual, 0.0, atol=1e-6)


class TestUnconstrainedReduction:
    def test_identity_case(self):
        np.testing.assert_allclose(
            unconstrained_solution_jacobian(np.eye(3), -np.eye(3)), np.eye(3)
        )

    def test_scaled_identity(self):
        np.testing.assert_allclose(
            unconstrained_solution_jacobian(2.0 * np.eye(4), -np.eye(4)),
            0.5 * np.eye(4),
        )

    def test_defining_equation_residual(self, rng):
        g = rng.standard_normal((6, 6))
        hessian = g @ g.T + 6 * np.eye(6)
        mixed = rng.standard_normal((6, 4))
        jac = unconstrained_solution_jacobian(hessian, mixed)
        assert np.linalg.norm(hessian @ jac + mixed) <= 1e-10 * np.linalg.norm(mixed)
