"""Robust vector pooling node.

The forward pass pools a batch of point sets x (b, m, n) into y (b, m) by
minimizing sum_i phi(||u - x_i||_2; alpha) over u.  The quadratic penalty
has the sample mean as its closed-form solution; every other penalty is
minimized with L-BFGS, and the non-convex penalties (welsch, trunc-quad)
take the better of two deterministic initializations (mean and
coordinate-wise median).

The backward pass never materializes the (m, n*m) Jacobian of the solution
map.  With w solving H w = v for the pooled Hessian

    H = sum_i kappa1(z_i) I + kappa2(z_i) (y - x_i)(y - x_i)^T,

the incoming gradient v maps to per-point gradients

    dJ(x_i) = kappa1(z_i) w^T + (kappa2(z_i) w^T (y - x_i)) (y - x_i)^T,

evaluated left to right so the per-batch workspace stays O(n m + m*m).
When kappa2 vanishes for every point the whole solve collapses to
dJ(x_i) = kappa1(z_i) v / sum_j kappa1(z_j).

``pool_jacobian_naive`` builds the full Jacobian stack (O(n m^2) storage)
and exists as the baseline the memory-scaling benchmarks compare against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, workspace as ws
from .backend import kernels
from .errors import DimensionMismatchError, NotPositiveDefiniteError
from .lbfgs import lbfgs_minimize
from .penalties import PenaltyKind

__all__ = [
    "BACKWARD_NORM_SHIFT",
    "PoolResult",
    "pool_forward",
    "pool_backward",
    "pool_jacobian_naive",
]

# Distance shift applied in the backward pass only, so the penalty
# coefficients stay finite when a point coincides with the pooled output.
# The forward objective uses exact norms.
BACKWARD_NORM_SHIFT = 1e-9


@dataclass
class PoolResult:
    """Pooled outputs with per-batch solver diagnostics."""

    y: np.ndarray  # (b, m)
    objective: np.ndarray  # (b,)
    converged: np.ndarray  # (b,) bool
    iterations: np.ndarray  # (b,) int


def _validate_points(x) -> np.ndarray:
    x = np.ascontiguousarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    if x.ndim != 3:
        raise DimensionMismatchError(f"points must have shape (b, m, n), got {x.shape}")
    if x.shape[1] < 1 or x.shape[2] < 1:
        raise DimensionMismatchError("need at least one dimension and one point")
    if not np.isfinite(x).all():
        raise ValueError("points must be finite")
    return x


def pool_forward(
    x,
    kind: PenaltyKind,
    tol: float = 1e-10,
    max_iter: int = 500,
    history: int = 10,
    u0=None,
) -> PoolResult:
    """Minimize the pooling objective for each batch element.

    Convergence is declared when the objective gradient 2-norm drops to
    ``tol * n``.  ``u0`` optionally overrides the initialization strategy
    with an explicit (b, m) warm start (ignored for the quadratic penalty,
    whose solution is the sample mean regardless of initialization).
    """
    x = _validate_points(x)
    if not tol > 0:
        raise ValueError("tol must be positive")
    b, m, n = x.shape
    kern = kernels(x.dtype)

    y = ws.alloc((b, m), dtype=x.dtype)
    objective = ws.alloc(b, dtype=np.float64)
    converged = np.ones(b, dtype=bool)
    iterations = np.zeros(b, dtype=np.int64)

    if u0 is not None:
        u0 = np.asarray(u0, dtype=np.float64)
        if u0.shape != (b, m):
            raise DimensionMismatchError(f"u0 must have shape {(b, m)}, got {u0.shape}")

    for bi in range(b):
        xb = x[bi]
        diffs = ws.alloc((m, n), dtype=x.dtype)
        z = ws.alloc(n, dtype=x.dtype)
        scratch = ws.alloc(n, dtype=x.dtype)
        grad = ws.alloc(m, dtype=x.dtype)

        def fun_grad(u, xb=xb, diffs=diffs, z=z, scratch=scratch, grad=grad):
            value = kern.pool_objective_gradient(
                xb, u, kind.family_id, kind.alpha, grad, diffs, z, scratch
            )
            return value, grad

        if kind.family == "quadratic":
            np.mean(xb, axis=1, out=y[bi])
            objective[bi] = fun_grad(y[bi])[0]
        else:
            threshold = tol * n
            done = False
            pre_iterations = 0
            if u0 is not None:
                # Warm start: a few Newton steps usually finish the job
                # before any quasi-Newton iterations are needed.
                u = np.array(u0[bi], dtype=np.float64)
                value, ok, steps = _newton_polish(
                    kern, kind, u, fun_grad, diffs, z, threshold
                )
                if ok:
                    y[bi] = u
                    objective[bi] = value
                    converged[bi] = True
                    iterations[bi] = steps
                    done = True
                else:
                    inits = [u]
                    pre_iterations = steps
            else:
                inits = [xb.mean(axis=1)]
                if kind.family in ("welsch", "trunc-quad"):
                    inits.append(np.median(xb, axis=1))
            if not done:
                best = None
                for init in inits:
                    res = lbfgs_minimize(
                        fun_grad, init, tol=threshold, max_iter=max_iter,
                        history=history,
                    )
                    if best is None or res.value < best.value:
                        best = res
                value, ok, extra = _newton_polish(
                    kern, kind, best.u, fun_grad, diffs, z, threshold
                )
                y[bi] = best.u
                objective[bi] = value
                converged[bi] = best.converged or ok
                iterations[bi] = pre_iterations + best.iterations + extra

        for buf in (diffs, z, scratch, grad):
            ws.release(buf)

    return PoolResult(y=y, objective=objective, converged=converged, iterations=iterations)


def _newton_polish(kern, kind, u, fun_grad, diffs, z, threshold, max_steps=10):
    """Refine an L-BFGS iterate with damped Newton steps.

    Line-search methods stall near machine precision because objective
    differences fall below rounding; Newton steps with the analytic
    pooled Hessian push the gradient norm to the float64 floor, which the
    tight tolerances of implicit gradient checks require.  ``u`` is
    refined in place.  Returns (value, converged, steps).
    """
    m, n = diffs.shape
    value, grad = fun_grad(u)
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm <= threshold:
        return value, True, 0
    k1 = ws.alloc(n, dtype=diffs.dtype)
    k2 = ws.alloc(n, dtype=diffs.dtype)
    scaled = ws.alloc((m, n), dtype=diffs.dtype)
    hess = ws.alloc((m, m), dtype=diffs.dtype)
    delta = ws.alloc(m, dtype=diffs.dtype)
    trial = ws.alloc(m, dtype=diffs.dtype)
    steps = 0
    try:
        for _ in range(max_steps):
            # fun_grad left diffs = u - x_i and z = ||u - x_i|| for this u.
            kern.kappa_kernel(kind.family_id, kind.alpha, z, k1, k2)
            np.multiply(diffs, k2, out=scaled)
            np.matmul(scaled, diffs.T, out=hess)
            hess.flat[:: m + 1] += k1.sum()
            np.copyto(delta, grad)
            try:
                linalg.spd_solve_inplace(hess, delta)
            except NotPositiveDefiniteError:
                break
            improved = False
            for _ in range(4):
                np.subtract(u, delta, out=trial)
                trial_value, trial_grad = fun_grad(trial)
                trial_norm = float(np.linalg.norm(trial_grad))
                if np.isfinite(trial_value) and trial_norm < grad_norm:
                    np.copyto(u, trial)
                    value, grad_norm = trial_value, trial_norm
                    improved = True
                    break
                delta *= 0.5
            steps += 1
            if not improved:
                fun_grad(u)  # restore diffs/z to the accepted iterate
                break
            if grad_norm <= threshold:
                break
        return value, grad_norm <= threshold, steps
    finally:
        for buf in (k1, k2, scaled, hess, delta, trial):
            ws.release(buf)


def _check_backward_args(x, y, v=None):
    x = _validate_points(x)
    y = np.ascontiguousarray(y, dtype=x.dtype)
    b, m, _ = x.shape
    if y.shape != (b, m):
        raise DimensionMismatchError(f"y must have shape {(b, m)}, got {y.shape}")
    if v is None:
        return x, y, None
    v = np.ascontiguousarray(v, dtype=x.dtype)
    if v.shape != (b, m):
        raise DimensionMismatchError(f"v must have shape {(b, m)}, got {v.shape}")
    return x, y, v


def pool_backward(
    x,
    y,
    kind: PenaltyKind,
    v,
    regularization: float = 0.0,
    allow_fast_path: bool = True,
) -> np.ndarray:
    """Map the incoming gradient v (b, m) to per-point gradients (b, m, n).

    ``y`` must be (approximately) the pooled output for ``x`` under
    ``kind``; stationarity is assumed, not re-verified.  ``regularization``
    adds a ridge to the pooled Hessian before the solve.
    ``allow_fast_path=False`` forces the general Cholesky path even when
    every kappa2 is zero (used to test path equivalence).
    """
    x, y, v = _check_backward_args(x, y, v)
    b, m, n = x.shape
    kern = kernels(x.dtype)

    out = ws.alloc((b, m, n), dtype=x.dtype)
    for bi in range(b):
        ydx = out[bi]
        np.subtract(y[bi][:, None], x[bi], out=ydx)
        z = ws.alloc(n, dtype=x.dtype)
        k1 = ws.alloc(n, dtype=x.dtype)
        k2 = ws.alloc(n, dtype=x.dtype)
        kern.row_norms_shifted(ydx, BACKWARD_NORM_SHIFT, z)
        kern.kappa_kernel(kind.family_id, kind.alpha, z, k1, k2)

        if allow_fast_path and not k2.any():
            k1_sum = float(k1.sum())
            if k1_sum <= 0.0:
                raise NotPositiveDefiniteError(
                    "pooled Hessian is zero (all points truncated); "
                    "the minimizer is not isolated"
                )
            kern.pool_fast_finish(ydx, v[bi] / k1_sum, k1)
        else:
            scaled = ws.alloc((m, n), dtype=x.dtype)
            np.multiply(ydx, k2, out=scaled)
            hess = ws.alloc((m, m), dtype=x.dtype)
            np.matmul(scaled, ydx.T, out=hess)
            ws.release(scaled)
            hess.flat[:: m + 1] += k1.sum() + regularization
            w = ws.alloc(m, dtype=x.dtype)
            np.copyto(w, v[bi])
            linalg.spd_solve_inplace(hess, w)
            u = ws.alloc(n, dtype=x.dtype)
            np.matmul(w, ydx, out=u)
            u *= k2
            kern.pool_finish(ydx, w, k1, u)
            for buf in (hess, w, u):
                ws.release(buf)

        for buf in (z, k1, k2):
            ws.release(buf)
    return out


def pool_jacobian_naive(x, y, kind: PenaltyKind, regularization: float = 0.0) -> np.ndarray:
    """Full Jacobian stack jac[b, i, k, j] = d y_i / d x[k, j].

    Materializes one m-by-m block per point (O(n m^2) storage per batch
    element); exists as the comparison baseline for the structured
    backward pass.
    """
    x, y, _ = _check_backward_args(x, y)
    b, m, n = x.shape
    kern = kernels(x.dtype)

    jac = ws.alloc((b, m, m, n), dtype=x.dtype)
    for bi in range(b):
        ydx = ws.alloc((m, n), dtype=x.dtype)
        np.subtract(y[bi][:, None], x[bi], out=ydx)
        z = ws.alloc(n, dtype=x.dtype)
        k1 = ws.alloc(n, dtype=x.dtype)
        k2 = ws.alloc(n, dtype=x.dtype)
        kern.row_norms_shifted(ydx, BACKWARD_NORM_SHIFT, z)
        kern.kappa_kernel(kind.family_id, kind.alpha, z, k1, k2)

        scaled = ws.alloc((m, n), dtype=x.dtype)
        np.multiply(ydx, k2, out=scaled)
        hess = ws.alloc((m, m), dtype=x.dtype)
        np.matmul(scaled, ydx.T, out=hess)
        hess.flat[:: m + 1] += k1.sum() + regularization
        linalg.spd_invert_inplace(hess)
        solved = ws.alloc((m, n), dtype=x.dtype)
        np.matmul(hess, ydx, out=solved)

        # jac block for point j: k1[j] * H^-1 + k2[j] * (H^-1 d_j) d_j^T
        block = ws.alloc((m, m), dtype=x.dtype)
        for j in range(n):
            np.multiply(hess, k1[j], out=block)
            block += solved[:, j][:, None] * (k2[j] * ydx[:, j])[None, :]
            jac[bi, :, :, j] = block
        for buf in (ydx, z, k1, k2, scaled, hess, solved, block):
            ws.release(buf)
    return jac
