"""Pure-NumPy implementations of the hot kernels.

This module and the compiled extension ``_kernels_c`` implement the same
call signatures and buffer contracts; :mod:`declnode.backend` picks one at
import time.  All kernels write into caller-provided buffers and never
allocate anything larger than O(m + n) themselves, so workspace accounting
is identical on both backends.

Penalty families are addressed by integer id (see ``backend.FAMILY_IDS``):
0 quadratic, 1 pseudo-huber, 2 huber, 3 welsch, 4 trunc-quad.
"""

from __future__ import annotations

import numpy as np

QUADRATIC, PSEUDO_HUBER, HUBER, WELSCH, TRUNC_QUAD = range(5)


def row_norms_shifted(a, eps, out):
    """out[j] = sqrt(sum_i a[i, j]**2) + eps for an (m, n) array."""
    np.einsum("ij,ij->j", a, a, out=out)
    np.sqrt(out, out=out)
    out += eps


def phi_kernel(family, alpha, z, out):
    """Penalty values phi(z; alpha) for non-negative z, written to ``out``."""
    if family == QUADRATIC:
        np.multiply(z, z, out=out)
        out *= 0.5
    elif family == PSEUDO_HUBER:
        np.divide(z, alpha, out=out)
        np.square(out, out=out)
        out += 1.0
        np.sqrt(out, out=out)
        out -= 1.0
        out *= alpha * alpha
    elif family == HUBER:
        np.multiply(z, z, out=out)
        out *= 0.5
        tail = z > alpha
        out[tail] = alpha * (z[tail] - 0.5 * alpha)
    elif family == WELSCH:
        np.multiply(z, z, out=out)
        out *= -0.5 / (alpha * alpha)
        np.exp(out, out=out)
        np.subtract(1.0, out, out=out)
    elif family == TRUNC_QUAD:
        np.multiply(z, z, out=out)
        out *= 0.5
        out[z > alpha] = 0.5 * alpha * alpha
    else:
        raise ValueError(f"unknown penalty family id {family}")


def kappa1_kernel(family, alpha, z, out):
    """First penalty coefficient kappa1(z; alpha); ``out`` must not alias z."""
    if family == QUADRATIC:
        out.fill(1.0)
    elif family == PSEUDO_HUBER:
        np.divide(z, alpha, out=out)
        np.square(out, out=out)
        out += 1.0
        np.power(out, -0.5, out=out)
    elif family == HUBER:
        out.fill(1.0)
        tail = z > alpha
        out[tail] = alpha / z[tail]
    elif family == WELSCH:
        np.multiply(z, z, out=out)
        out *= -0.5 / (alpha * alpha)
        np.exp(out, out=out)
        out *= 1.0 / (alpha * alpha)
    elif family == TRUNC_QUAD:
        out.fill(0.0)
        out[z <= alpha] = 1.0
    else:
        raise ValueError(f"unknown penalty family id {family}")


def kappa_kernel(family, alpha, z, k1, k2):
    """Both penalty coefficients; k1/k2 must not alias z or each other."""
    if family == QUADRATIC:
        k1.fill(1.0)
        k2.fill(0.0)
    elif family == PSEUDO_HUBER:
        np.divide(z, alpha, out=k1)
        np.square(k1, out=k1)
        k1 += 1.0
        np.power(k1, -1.5, out=k2)
        k2 *= -1.0 / (alpha * alpha)
        np.power(k1, -0.5, out=k1)
    elif family == HUBER:
        k1.fill(1.0)
        k2.fill(0.0)
        tail = z > alpha
        zt = z[tail]
        k1[tail] = alpha / zt
        k2[tail] = -alpha / (zt * zt * zt)
    elif family == WELSCH:
        np.multiply(z, z, out=k1)
        k1 *= -0.5 / (alpha * alpha)
        np.exp(k1, out=k1)
        np.multiply(k1, -1.0 / alpha**4, out=k2)
        k1 *= 1.0 / (alpha * alpha)
    elif family == TRUNC_QUAD:
        k1.fill(0.0)
        k1[z <= alpha] = 1.0
        k2.fill(0.0)
    else:
        raise ValueError(f"unknown penalty family id {family}")


def pool_objective_gradient(x, u, family, alpha, grad, diffs, z, scratch):
    """Fused objective/gradient evaluation for robust pooling.

    Fills ``diffs`` with u - x_i columnwise, ``z`` with the column norms,
    and ``grad`` with sum_i kappa1(z_i) (u - x_i).  Returns the objective
    value sum_i phi(z_i).  ``scratch`` is an (n,) work vector.
    """
    np.subtract(u[:, None], x, out=diffs)
    np.einsum("ij,ij->j", diffs, diffs, out=z)
    np.sqrt(z, out=z)
    phi_kernel(family, alpha, z, scratch)
    value = float(scratch.sum())
    kappa1_kernel(family, alpha, z, scratch)
    np.dot(diffs, scratch, out=grad)
    return value


def pool_fast_finish(ydx, scaled_v, k1):
    """In place: ydx[i, j] = k1[j] * scaled_v[i] (kappa2-free gradient)."""
    for i in range(ydx.shape[0]):
        np.multiply(k1, scaled_v[i], out=ydx[i])


def pool_finish(ydx, w, k1, u):
    """In place: ydx[i, j] = k1[j] * w[i] + u[j] * ydx[i, j]."""
    ydx *= u
    for i in range(ydx.shape[0]):
        ydx[i] += w[i] * k1


def sinkhorn_linear(K, r, c, u, v, Kv, KTu, tol, max_iter):
    """Linear-domain Sinkhorn scaling loop.

    Iterates u <- r / (K v), v <- c / (K^T u) in place until the row
    marginal residual of diag(u) K diag(v) drops to ``tol`` (column
    marginals are exact by construction after each v-update).

    Returns (iterations, residual, status) with status 0 on convergence,
    1 when ``max_iter`` was exhausted, and 2 on numerical under/overflow.
    """
    np.matmul(K, v, out=Kv)
    residual = np.inf
    for it in range(1, max_iter + 1):
        if not np.isfinite(Kv).all() or (Kv <= 0.0).any():
            return it - 1, residual, 2
        np.divide(r, Kv, out=u)
        np.matmul(K.T, u, out=KTu)
        if not np.isfinite(KTu).all() or (KTu <= 0.0).any():
            return it - 1, residual, 2
        np.divide(c, KTu, out=v)
        if not np.isfinite(u).all() or not np.isfinite(v).all():
            return it - 1, residual, 2
        np.matmul(K, v, out=Kv)
        residual = float(np.abs(u * Kv - r).max())
        if residual <= tol:
            return it, residual, 0
    return max_iter, residual, 1


def ot_subtract_rank_updates(t, v1, v2, P):
    """In place: t[i, j] -= (v1[i-1] if i >= 1 else 0 + v2[j]) * P[i, j]."""
    t[0] -= v2 * P[0]
    for i in range(1, t.shape[0]):
        t[i] -= (v1[i - 1] + v2) * P[i]
