"""Limited-memory quasi-Newton minimizer (two-loop recursion).

Small and deterministic: backtracking line search with a sufficient
decrease condition, curvature-pair skipping, and a steepest-descent
fallback with step halving when the quasi-Newton direction fails to
produce decrease.  This is the forward-pass workhorse for robust pooling,
where the dimension is the feature size m and gradients are cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import workspace as ws

__all__ = ["LbfgsResult", "lbfgs_minimize"]

_SUFFICIENT_DECREASE = 1e-4
_MAX_BACKTRACKS = 30
_CURVATURE_FLOOR = 1e-10


@dataclass
class LbfgsResult:
    u: np.ndarray
    value: float
    grad_norm: float
    converged: bool
    iterations: int


def lbfgs_minimize(fun_grad, u0, tol, max_iter=500, history=10) -> LbfgsResult:
    """Minimize a smooth function given a fused value/gradient callable.

    Parameters
    ----------
    fun_grad : callable
        Maps a point u to ``(value, gradient)``.  The gradient buffer may
        be reused by the callable between calls; it is copied here.
    u0 : array_like
        Starting point.
    tol : float
        Convergence threshold on the gradient 2-norm.
    max_iter, history : int
        Iteration cap and number of curvature pairs kept.

    Returns
    -------
    LbfgsResult
        Final iterate, value, gradient norm, a convergence flag, and the
        number of accepted steps.
    """
    u0 = np.asarray(u0, dtype=np.float64)
    dim = u0.size

    u = ws.alloc(dim)
    np.copyto(u, u0.ravel())
    g = ws.alloc(dim)
    u_new = ws.alloc(dim)
    g_new = ws.alloc(dim)
    direction = ws.alloc(dim)
    s_hist = ws.alloc((history, dim))
    y_hist = ws.alloc((history, dim))
    rho = ws.alloc(history)
    alpha = np.empty(history)

    value, g_borrowed = fun_grad(u)
    np.copyto(g, g_borrowed)

    n_pairs = 0
    head = 0  # next slot to write in the circular history
    converged = False
    iterations = 0
    stalled = 0  # consecutive accepted steps without measurable decrease

    def _backtrack(gd: float, step: float):
        """Try step, step/2, ... along ``direction``; None when no decrease."""
        nonlocal value
        for _ in range(_MAX_BACKTRACKS):
            np.multiply(direction, step, out=u_new)
            np.add(u_new, u, out=u_new)
            trial_value, trial_grad = fun_grad(u_new)
            if np.isfinite(trial_value) and (
                trial_value <= value + _SUFFICIENT_DECREASE * step * gd
            ):
                np.copyto(g_new, trial_grad)
                return trial_value
            step *= 0.5
        return None

    try:
        for it in range(1, max_iter + 1):
            grad_norm = float(np.linalg.norm(g))
            if grad_norm <= tol:
                converged = True
                break
            iterations = it

            # Two-loop recursion, newest pair first.
            np.copyto(direction, g)
            order = [(head - 1 - k) % history for k in range(n_pairs)]
            for k in order:
                alpha[k] = rho[k] * float(s_hist[k] @ direction)
                direction -= alpha[k] * y_hist[k]
            if n_pairs:
                newest = order[0]
                yy = float(y_hist[newest] @ y_hist[newest])
                if yy > 0:
                    direction *= 1.0 / (rho[newest] * yy)
            for k in reversed(order):
                beta = rho[k] * float(y_hist[k] @ direction)
                direction += (alpha[k] - beta) * s_hist[k]
            direction *= -1.0

            gd = float(g @ direction)
            if gd >= 0:
                # Not a descent direction; drop the memory and restart.
                n_pairs = 0
                np.multiply(g, -1.0, out=direction)
                gd = -grad_norm * grad_norm

            step0 = 1.0 if it > 1 else min(1.0, 1.0 / max(grad_norm, 1.0))
            new_value = _backtrack(gd, step0)
            if new_value is None and n_pairs:
                # Fall back to a plain gradient step with halving.
                n_pairs = 0
                np.multiply(g, -1.0, out=direction)
                gd = -grad_norm * grad_norm
                new_value = _backtrack(gd, min(1.0, 1.0 / max(grad_norm, 1.0)))
            if new_value is None:
                break
            # Objective differences below rounding mean the line search can
            # no longer certify progress; stop instead of spinning.
            stalled = stalled + 1 if new_value >= value else 0
            if stalled >= 3:
                u, u_new = u_new, u
                g, g_new = g_new, g
                value = new_value
                break

            s_hist[head] = u_new
            s_hist[head] -= u
            y_hist[head] = g_new
            y_hist[head] -= g
            sy = float(s_hist[head] @ y_hist[head])
            s_norm = float(np.linalg.norm(s_hist[head]))
            y_norm = float(np.linalg.norm(y_hist[head]))
            if sy > _CURVATURE_FLOOR * s_norm * y_norm:
                rho[head] = 1.0 / sy
                head = (head + 1) % history
                n_pairs = min(n_pairs + 1, history)

            u, u_new = u_new, u
            g, g_new = g_new, g
            value = new_value
        else:
            grad_norm = float(np.linalg.norm(g))

        if not converged:
            grad_norm = float(np.linalg.norm(g))
            converged = grad_norm <= tol

        return LbfgsResult(
            u=np.array(u, copy=True),
            value=float(value),
            grad_norm=grad_norm,
            converged=converged,
            iterations=iterations,
        )
    finally:
        for buf in (u, g, u_new, g_new, direction, s_hist, y_hist, rho):
            ws.release(buf)
