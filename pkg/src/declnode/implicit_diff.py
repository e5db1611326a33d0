"""Generic differentiation of equality-constrained solution maps.

Given black-box objective f(x, u) and constraints h(x, u) = 0 with a
solution y at input x, this module assembles the derivative blocks

    A = d h / d y                         (p, m)
    C = d h / d x                         (p, n)
    H = d^2 L / d y d y                   (m, m)
    B = d^2 L / d y d x                   (m, n)

for the Lagrangian L = f - multipliers . h, with the multipliers solved in
least squares from  multipliers^T A = d f / d y,  and evaluates the
solution-map Jacobian

    dy/dx = H^-1 A^T (A H^-1 A^T)^-1 (A H^-1 B - C) - H^-1 B

via Cholesky solves (never explicit inverses).  Everything is built with
central finite differences, so this is a desk-scale oracle for
cross-checking specialized backward passes, not a performance path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import RankDeficientConstraintsError
from .linalg import cholesky_factorize, cholesky_solve

__all__ = [
    "NodeSpec",
    "ImplicitWorkspace",
    "StationarityWarning",
    "assemble_derivatives",
    "solution_jacobian",
    "unconstrained_solution_jacobian",
]

_RANK_RTOL = 1e-8
_STATIONARITY_WARN = 1e-6


class StationarityWarning(UserWarning):
    """The supplied point does not satisfy first-order optimality well."""


@dataclass(frozen=True)
class NodeSpec:
    """A declarative node: dimensions plus objective/constraint callables."""

    n_in: int
    m_out: int
    p_constraints: int
    objective: Callable[[np.ndarray, np.ndarray], float]
    constraints: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.p_constraints >= self.m_out:
            raise ValueError("need fewer constraints than output dimensions")
        if self.p_constraints > 0 and self.constraints is None:
            raise ValueError("constraints callable required when p_constraints > 0")


@dataclass
class ImplicitWorkspace:
    """Derivative blocks of one node at one (x, y) pair."""

    hessian: np.ndarray  # (m, m) Lagrangian Hessian in y, symmetrized
    mixed: np.ndarray  # (m, n) Lagrangian cross derivatives d2L/(dy dx)
    constraint_jac_y: np.ndarray  # (p, m)
    constraint_jac_x: np.ndarray  # (p, n)
    multipliers: np.ndarray  # (p,)
    stationarity_residual: float


def _coordinate_steps(v: np.ndarray, step: float) -> np.ndarray:
    return step * np.maximum(1.0, np.abs(v))


def _grad(fun, v, steps):
    g = np.empty(v.size)
    vp = v.copy()
    for i in range(v.size):
        h = steps[i]
        vp[i] = v[i] + h
        fp = fun(vp)
        vp[i] = v[i] - h
        fm = fun(vp)
        vp[i] = v[i]
        g[i] = (fp - fm) / (2 * h)
    return g


def _jac(fun, v, steps, out_rows):
    jac = np.empty((out_rows, v.size))
    vp = v.copy()
    for i in range(v.size):
        h = steps[i]
        vp[i] = v[i] + h
        fp = np.asarray(fun(vp), dtype=np.float64)
        vp[i] = v[i] - h
        fm = np.asarray(fun(vp), dtype=np.float64)
        vp[i] = v[i]
        jac[:, i] = (fp - fm) / (2 * h)
    return jac


def _hessian(fun, v, steps):
    """Symmetric second-difference Hessian of a scalar function."""
    dim = v.size
    hess = np.empty((dim, dim))
    f0 = fun(v)
    vp = v.copy()
    for i in range(dim):
        hi = steps[i]
        vp[i] = v[i] + hi
        fp = fun(vp)
        vp[i] = v[i] - hi
        fm = fun(vp)
        vp[i] = v[i]
        hess[i, i] = (fp - 2 * f0 + fm) / (hi * hi)
        for j in range(i + 1, dim):
            hj = steps[j]
            vp[i] = v[i] + hi
            vp[j] = v[j] + hj
            fpp = fun(vp)
            vp[j] = v[j] - hj
            fpm = fun(vp)
            vp[i] = v[i] - hi
            fmm = fun(vp)
            vp[j] = v[j] + hj
            fmp = fun(vp)
            vp[i] = v[i]
            vp[j] = v[j]
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4 * hi * hj)
    return hess


def _cross(fun, y, x, steps_y, steps_x):
    """Mixed second differences d2 fun / (dy_i dx_j), shape (m, n)."""
    out = np.empty((y.size, x.size))
    yp = y.copy()
    xp = x.copy()
    for i in range(y.size):
        hi = steps_y[i]
        for j in range(x.size):
            hj = steps_x[j]
            yp[i] = y[i] + hi
            xp[j] = x[j] + hj
            fpp = fun(xp, yp)
            xp[j] = x[j] - hj
            fpm = fun(xp, yp)
            yp[i] = y[i] - hi
            fmm = fun(xp, yp)
            xp[j] = x[j] + hj
            fmp = fun(xp, yp)
            yp[i] = y[i]
            xp[j] = x[j]
            out[i, j] = (fpp - fpm - fmp + fmm) / (4 * hi * hj)
    return out


def assemble_derivatives(
    spec: NodeSpec, x, y, fd_step: float = 1e-5
) -> ImplicitWorkspace:
    """Build all derivative blocks at (x, y) by central differences.

    First derivatives use per-coordinate steps ``fd_step * max(1, |v_i|)``;
    second derivatives use ten times that.  ``y`` must be a stationary
    point of the constrained problem at ``x``; a :class:`StationarityWarning`
    is emitted when the first-order residual exceeds 1e-6, since the
    implicit Jacobian is only meaningful at optima.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != spec.n_in or y.size != spec.m_out:
        raise ValueError(
            f"expected sizes ({spec.n_in}, {spec.m_out}), got ({x.size}, {y.size})"
        )
    if not fd_step > 0:
        raise ValueError("fd_step must be positive")
    steps_y1 = _coordinate_steps(y, fd_step)
    steps_x2 = _coordinate_steps(x, 10 * fd_step)
    steps_y2 = _coordinate_steps(y, 10 * fd_step)

    grad_f_y = _grad(lambda u: spec.objective(x, u), y, steps_y1)

    p = spec.p_constraints
    if p:
        jac_y = _jac(lambda u: spec.constraints(x, u), y, steps_y1, p)
        jac_x = _jac(lambda xx: spec.constraints(xx, y), x, _coordinate_steps(x, fd_step), p)
        singular = np.linalg.svd(jac_y, compute_uv=False)
        if singular[-1] < _RANK_RTOL * singular[0]:
            raise RankDeficientConstraintsError(
                "constraint Jacobian is rank deficient; remove redundant constraints"
            )
        multipliers = np.linalg.lstsq(jac_y.T, grad_f_y, rcond=None)[0]
        residual = float(np.linalg.norm(grad_f_y - multipliers @ jac_y))

        def lagrangian(xx, u):
            return spec.objective(xx, u) - multipliers @ np.asarray(
                spec.constraints(xx, u), dtype=np.float64
            )

    else:
        jac_y = np.zeros((0, y.size))
        jac_x = np.zeros((0, x.size))
        multipliers = np.zeros(0)
        residual = float(np.linalg.norm(grad_f_y))
        lagrangian = spec.objective

    if residual > _STATIONARITY_WARN:
        warnings.warn(
            f"stationarity residual {residual:.3e} exceeds {_STATIONARITY_WARN:g}; "
            "the implicit Jacobian is only valid at optima",
            StationarityWarning,
            stacklevel=2,
        )

    hessian = _hessian(lambda u: lagrangian(x, u), y, steps_y2)
    hessian = 0.5 * (hessian + hessian.T)
    mixed = _cross(lagrangian, y, x, steps_y2, steps_x2)

    return ImplicitWorkspace(
        hessian=hessian,
        mixed=mixed,
        constraint_jac_y=jac_y,
        constraint_jac_x=jac_x,
        multipliers=multipliers,
        stationarity_residual=residual,
    )


def solution_jacobian(workspace: ImplicitWorkspace, regularization: float = 0.0) -> np.ndarray:
    """Dense dy/dx from assembled blocks, via Cholesky solves only."""
    factor = cholesky_factorize(workspace.hessian, regularization)
    h_inv_b = cholesky_solve(factor, workspace.mixed)
    if workspace.multipliers.size == 0:
        return -h_inv_b
    a = workspace.constraint_jac_y
    h_inv_at = cholesky_solve(factor, a.T)
    gram = a @ h_inv_at
    rhs = a @ h_inv_b - workspace.constraint_jac_x
    correction = cholesky_solve(cholesky_factorize(gram), rhs)
    return h_inv_at @ correction - h_inv_b


def unconstrained_solution_jacobian(hessian, mixed, regularization: float = 0.0) -> np.ndarray:
    """dy/dx = -H^-1 B for unconstrained nodes."""
    factor = cholesky_factorize(hessian, regularization)
    return -cholesky_solve(factor, np.asarray(mixed, dtype=np.float64))
