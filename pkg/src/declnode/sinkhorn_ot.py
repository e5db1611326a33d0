"""Entropy-regularized optimal transport node.

The forward pass solves, per batch element,

    minimize  <P, M> + (1/gamma) KL(P || r c^T)
    s.t.      P 1 = r,  P^T 1 = c,  P > 0,

by Sinkhorn scaling of the kernel K = (r c^T) * exp(-gamma * M).  Note the
convention: the KL term is divided by gamma, so larger gamma means weaker
regularization and a sharper plan.  A log-domain variant (log-sum-exp
updates) covers the large-gamma regime where the linear-domain scalings
under- or overflow; by default the solver switches over automatically.

The backward pass differentiates the solution map implicitly.  Because the
objective Hessian in P is diagonal and the constraints are 0-1 sums, the
whole reduced system collapses to the (m + n - 1) matrix

    gamma * [[diag(rowsum_{2:m}),  P_{2:m}],
             [P_{2:m}^T,           diag(colsum)]]

(the first row constraint is dropped as redundant, hence the convention
that the returned gradient w.r.t. r has a zero first component).  The
``structured-block`` method applies the block inverse of that matrix via
one Cholesky factorization of the smaller Schur complement, eliminating
whichever diagonal block is larger; ``structured-full`` is the baseline
that forms the explicit dense inverse from a single Cholesky
factorization; ``unrolled`` reverse-propagates through the stored
row/column normalization iterations, the memory-hungry baseline.

Gradients w.r.t. the marginals are representatives: on the simplex they
are defined only up to a constant shift, which :func:`simplex_reparam_vjp`
removes when pulling them back to unnormalized parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, workspace as ws
from .backend import kernels
from .errors import DimensionMismatchError, NumericalUnderflowError

__all__ = [
    "OT_BACKWARD_METHODS",
    "TransportProblem",
    "TransportPlan",
    "OtGradients",
    "ot_forward",
    "ot_backward",
    "simplex_reparam_vjp",
    "assemble_marginal_system",
]

OT_BACKWARD_METHODS = ("structured-block", "structured-full", "unrolled")


def _marginal_tolerance(dtype) -> float:
    # Sum-to-one is a float64 contract; float32 instances (benchmark mode)
    # are validated at a correspondingly coarser tolerance.
    return 1e-12 if np.dtype(dtype).itemsize >= 8 else 1e-5


@dataclass(frozen=True)
class TransportProblem:
    """Batched cost matrices with strictly positive, normalized marginals."""

    M: np.ndarray  # (b, m, n)
    r: np.ndarray  # (b, m), rows sum to 1
    c: np.ndarray  # (b, n), rows sum to 1
    gamma: float

    def __post_init__(self) -> None:
        M = np.ascontiguousarray(self.M)
        if not np.issubdtype(M.dtype, np.floating):
            M = M.astype(np.float64)
        if M.ndim == 2:
            M = M[None]
        r = np.ascontiguousarray(np.atleast_2d(self.r), dtype=M.dtype)
        c = np.ascontiguousarray(np.atleast_2d(self.c), dtype=M.dtype)
        if M.ndim != 3:
            raise DimensionMismatchError(f"M must be (b, m, n), got {self.M.shape}")
        b, m, n = M.shape
        if r.shape != (b, m) or c.shape != (b, n):
            raise DimensionMismatchError(
                f"marginals must have shapes {(b, m)} and {(b, n)}, "
                f"got {r.shape} and {c.shape}"
            )
        if not np.isfinite(M).all():
            raise ValueError("cost matrix must be finite")
        if (r <= 0).any() or (c <= 0).any():
            raise ValueError("marginals must be strictly positive")
        tol = _marginal_tolerance(M.dtype)
        if np.abs(r.sum(axis=1) - 1).max() > tol or np.abs(c.sum(axis=1) - 1).max() > tol:
            raise ValueError(f"marginals must sum to one within {tol}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be positive and finite")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def batch(self) -> int:
        return self.M.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.M.shape[1], self.M.shape[2]


@dataclass
class TransportPlan:
    """Transport plans with per-batch solver diagnostics."""

    P: np.ndarray  # (b, m, n)
    residual: np.ndarray  # (b,) max marginal violation
    iterations: np.ndarray  # (b,)
    converged: np.ndarray  # (b,) bool


@dataclass
class OtGradients:
    """Gradients w.r.t. cost matrix and marginals.

    ``dJdr[:, 0]`` is zero by the removed-constraint convention; marginal
    gradients are representatives modulo constant shifts and should be
    pulled back through :func:`simplex_reparam_vjp` before use.
    """

    dJdM: np.ndarray  # (b, m, n)
    dJdr: np.ndarray  # (b, m)
    dJdc: np.ndarray  # (b, n)


def _solve_linear(kern, M, r, c, gamma, tol, max_iter, p_out):
    m, n = M.shape
    K = ws.alloc((m, n), dtype=M.dtype)
    np.multiply(M, -gamma, out=K)
    np.exp(K, out=K)
    K *= r[:, None]
    K *= c[None, :]
    u = ws.alloc(m, dtype=M.dtype)
    v = ws.alloc(n, dtype=M.dtype)
    u.fill(1.0)
    v.fill(1.0)
    kv = ws.alloc(m, dtype=M.dtype)
    ktu = ws.alloc(n, dtype=M.dtype)
    try:
        iters, residual, status = kern.sinkhorn_linear(
            K, r, c, u, v, kv, ktu, tol, max_iter
        )
        if status == 2:
            raise NumericalUnderflowError(
                "linear-domain Sinkhorn scalings under/overflowed; "
                "use log_domain=True"
            )
        np.multiply(K, u[:, None], out=p_out)
        p_out *= v[None, :]
        return residual, iters, status == 0
    finally:
        for buf in (K, u, v, kv, ktu):
            ws.release(buf)


def _solve_log(M, r, c, gamma, tol, max_iter, p_out):
    m, n = M.shape
    log_k = ws.alloc((m, n), dtype=M.dtype)
    np.multiply(M, -gamma, out=log_k)
    log_r = ws.alloc(m, dtype=M.dtype)
    log_c = ws.alloc(n, dtype=M.dtype)
    np.log(r, out=log_r)
    np.log(c, out=log_c)
    log_k += log_r[:, None]
    log_k += log_c[None, :]

    f = ws.zeros(m, dtype=M.dtype)
    g = ws.zeros(n, dtype=M.dtype)
    row_buf = ws.alloc(m, dtype=M.dtype)
    row_buf2 = ws.alloc(m, dtype=M.dtype)
    col_buf = ws.alloc(n, dtype=M.dtype)
    col_buf2 = ws.alloc(n, dtype=M.dtype)
    t = p_out  # reuse the output buffer as the (m, n) scratch

    residual = np.inf
    iters = 0
    converged = False
    try:
        for it in range(1, max_iter + 1):
            iters = it
            # f-update: f = log r - LSE_j(log_k + g)
            np.add(log_k, g[None, :], out=t)
            np.max(t, axis=1, out=row_buf)
            t -= row_buf[:, None]
            np.exp(t, out=t)
            np.sum(t, axis=1, out=row_buf2)
            np.log(row_buf2, out=row_buf2)
            np.subtract(log_r, row_buf, out=f)
            f -= row_buf2
            # g-update: g = log c - LSE_i(log_k + f)
            np.add(log_k, f[:, None], out=t)
            np.max(t, axis=0, out=col_buf)
            t -= col_buf[None, :]
            np.exp(t, out=t)
            np.sum(t, axis=0, out=col_buf2)
            np.log(col_buf2, out=col_buf2)
            np.subtract(log_c, col_buf, out=g)
            g -= col_buf2
            # Plan and row residual (columns are exact after the g-update).
            np.add(log_k, f[:, None], out=t)
            t += g[None, :]
            np.exp(t, out=t)
            np.sum(t, axis=1, out=row_buf)
            row_buf -= r
            residual = float(np.abs(row_buf).max())
            if residual <= tol:
                converged = True
                break
        return residual, iters, converged
    finally:
        for buf in (log_k, log_r, log_c, f, g, row_buf, row_buf2, col_buf, col_buf2):
            ws.release(buf)


def ot_forward(
    prob: TransportProblem,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    log_domain: bool = False,
    auto_switch: bool = True,
) -> TransportPlan:
    """Solve the entropic transport problem by Sinkhorn scaling.

    Iterates until the worst marginal violation drops to ``tol`` or
    ``max_iter`` is reached (``tol=0`` runs exactly ``max_iter``
    iterations, which the benchmark sweeps use).  With ``log_domain=False``
    the linear-domain recurrence is used; if it under/overflows the batch
    element is retried in the log domain when ``auto_switch`` is set,
    otherwise :class:`NumericalUnderflowError` propagates.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    b, (m, n) = prob.batch, prob.shape
    kern = kernels(prob.M.dtype)

    P = ws.alloc((b, m, n), dtype=prob.M.dtype)
    residual = np.empty(b)
    iterations = np.zeros(b, dtype=np.int64)
    converged = np.zeros(b, dtype=bool)
    for bi in range(b):
        args = (prob.M[bi], prob.r[bi], prob.c[bi], prob.gamma, tol, max_iter, P[bi])
        if log_domain:
            res, iters, ok = _solve_log(*args)
        else:
            try:
                res, iters, ok = _solve_linear(kern, *args)
            except NumericalUnderflowError:
                if not auto_switch:
                    raise
                res, iters, ok = _solve_log(*args)
        residual[bi] = res
        iterations[bi] = iters
        converged[bi] = ok
    return TransportPlan(P=P, residual=residual, iterations=iterations, converged=converged)


def _solve_marginal_system_block(P, r, c, g1, g2):
    """Solve [[diag(r_2:), P_2:], [P_2:^T, diag(c)]] [v1; v2] = [g1; g2].

    One Cholesky factorization of the Schur complement of whichever
    diagonal block is larger, so the dense work is O(min(m-1, n)^3).
    """
    m = P.shape[0]
    n = P.shape[1]
    v1 = ws.alloc(m - 1, dtype=P.dtype)
    v2 = ws.alloc(n, dtype=P.dtype)
    if m == 1:
        np.divide(g2, c, out=v2)
        return v1, v2
    p2 = P[1:]
    if m - 1 <= n:
        scaled = ws.alloc((m - 1, n), dtype=P.dtype)
        np.divide(p2, c[None, :], out=scaled)
        schur = ws.alloc((m - 1, m - 1), dtype=P.dtype)
        np.matmul(scaled, p2.T, out=schur)
        schur *= -1.0
        schur.flat[:: m] += r[1:]
        np.matmul(scaled, g2, out=v1)
        v1 *= -1.0
        v1 += g1
        linalg.spd_solve_inplace(schur, v1)
        np.matmul(p2.T, v1, out=v2)
        v2 *= -1.0
        v2 += g2
        v2 /= c
    else:
        scaled = ws.alloc((m - 1, n), dtype=P.dtype)
        np.divide(p2, r[1:][:, None], out=scaled)
        schur = ws.alloc((n, n), dtype=P.dtype)
        np.matmul(p2.T, scaled, out=schur)
        schur *= -1.0
        schur.flat[:: n + 1] += c
        np.matmul(scaled.T, g1, out=v2)
        v2 *= -1.0
        v2 += g2
        linalg.spd_solve_inplace(schur, v2)
        np.matmul(p2, v2, out=v1)
        v1 *= -1.0
        v1 += g1
        v1 /= r[1:]
    ws.release(scaled)
    ws.release(schur)
    return v1, v2


def _solve_marginal_system_full(P, r, c, gamma, g1, g2):
    """Baseline: explicit inverse of the full (m + n - 1) system."""
    m, n = P.shape
    d = m - 1 + n
    full = ws.zeros((d, d), dtype=P.dtype)
    if m > 1:
        full.flat[: (m - 1) * d : d + 1] = gamma * r[1:]
        full[: m - 1, m - 1 :] = gamma * P[1:]
        full[m - 1 :, : m - 1] = gamma * P[1:].T
    full[m - 1 :, m - 1 :].flat[:: n + 1] = gamma * c
    linalg.spd_invert_inplace(full)
    rhs = ws.alloc(d, dtype=P.dtype)
    rhs[: m - 1] = g1
    rhs[m - 1 :] = g2
    sol = ws.alloc(d, dtype=P.dtype)
    np.matmul(full, rhs, out=sol)
    sol *= gamma  # (gamma * A)^-1 g = A^-1 g / gamma
    v1 = ws.alloc(m - 1, dtype=P.dtype)
    v2 = ws.alloc(n, dtype=P.dtype)
    v1[:] = sol[: m - 1]
    v2[:] = sol[m - 1 :]
    for buf in (full, rhs, sol):
        ws.release(buf)
    return v1, v2


def _structured_backward(kern, P, r, c, gamma, dJdP, dM, dr, dc, full):
    t = dM
    np.multiply(P, dJdP, out=t)
    t *= -gamma
    m, n = P.shape
    g1 = ws.alloc(m - 1, dtype=P.dtype)
    np.sum(t[1:], axis=1, out=g1)
    g2 = ws.alloc(n, dtype=P.dtype)
    np.sum(t, axis=0, out=g2)
    if full:
        v1, v2 = _solve_marginal_system_full(P, r, c, gamma, g1, g2)
    else:
        v1, v2 = _solve_marginal_system_block(P, r, c, g1, g2)
    kern.ot_subtract_rank_updates(t, v1, v2, P)
    dr[0] = 0.0
    np.multiply(v1, -1.0 / gamma, out=dr[1:])
    np.multiply(v2, -1.0 / gamma, out=dc)
    for buf in (g1, g2, v1, v2):
        ws.release(buf)


def _unrolled_backward(M, r, c, gamma, n_iter, dJdP, dM, dr, dc):
    """Reverse sweep through the row/column normalization iterations.

    Re-runs the forward recurrence storing the per-iteration plans (the
    tape an autodiff framework would retain), then walks it backwards.
    Workspace grows linearly with the iteration count, which is the point
    of comparing against the implicit methods.
    """
    m, n = M.shape
    n_iter = max(int(n_iter), 1)

    kernel = ws.alloc((m, n), dtype=M.dtype)
    np.multiply(M, -gamma, out=kernel)
    np.exp(kernel, out=kernel)
    kernel *= r[:, None]
    kernel *= c[None, :]

    pre_row = [kernel]  # plan before each row step
    pre_col = []  # plan before each column step
    row_scale = ws.alloc(m, dtype=M.dtype)
    col_scale = ws.alloc(n, dtype=M.dtype)
    current = kernel
    for step in range(n_iter):
        np.sum(current, axis=1, out=row_scale)
        np.divide(r, row_scale, out=row_scale)
        after_row = ws.alloc((m, n), dtype=M.dtype)
        np.multiply(current, row_scale[:, None], out=after_row)
        pre_col.append(after_row)
        np.sum(after_row, axis=0, out=col_scale)
        np.divide(c, col_scale, out=col_scale)
        after_col = ws.alloc((m, n), dtype=M.dtype)
        np.multiply(after_row, col_scale[None, :], out=after_col)
        if step + 1 < n_iter:
            pre_row.append(after_col)
        else:
            final = after_col
        current = after_col

    adj = dM  # running adjoint, reusing the output buffer
    np.copyto(adj, dJdP)
    rbar = ws.zeros(m, dtype=M.dtype)
    cbar = ws.zeros(n, dtype=M.dtype)
    for step in range(n_iter - 1, -1, -1):
        before_col = pre_col[step]
        np.sum(before_col, axis=0, out=col_scale)  # q
        w = np.einsum("ij,ij->j", adj, before_col)
        w /= col_scale
        cbar += w
        adj -= w[None, :]
        np.divide(c, col_scale, out=col_scale)
        adj *= col_scale[None, :]

        before_row = pre_row[step]
        np.sum(before_row, axis=1, out=row_scale)  # s
        tvec = np.einsum("ij,ij->i", adj, before_row)
        tvec /= row_scale
        rbar += tvec
        adj -= tvec[:, None]
        np.divide(r, row_scale, out=row_scale)
        adj *= row_scale[:, None]

    # Through K = (r c^T) * exp(-gamma M).
    kk = np.einsum("ij,ij->i", adj, kernel)
    rbar += kk / r
    kk = np.einsum("ij,ij->j", adj, kernel)
    cbar += kk / c
    adj *= kernel
    adj *= -gamma  # adj is dM now

    dr[:] = rbar
    dr -= rbar[0]  # removed-constraint gauge: first component zero
    dc[:] = cbar

    for buf in pre_col:
        ws.release(buf)
    for buf in pre_row:
        ws.release(buf)
    for buf in (final, row_scale, col_scale, rbar, cbar):
        ws.release(buf)


def ot_backward(
    prob: TransportProblem,
    plan: TransportPlan,
    dJdP,
    method: str = "structured-block",
) -> OtGradients:
    """Map the incoming plan gradient to gradients w.r.t. M, r, and c.

    The structured methods assume ``plan`` was solved to near-optimality
    (residual around 1e-9 or below); ``unrolled`` differentiates the
    finite-iteration solver map itself and is exact for any iteration
    count of the linear-domain recurrence.
    """
    if method not in OT_BACKWARD_METHODS:
        raise ValueError(f"method must be one of {OT_BACKWARD_METHODS}, got {method!r}")
    b, (m, n) = prob.batch, prob.shape
    dJdP = np.ascontiguousarray(dJdP, dtype=prob.M.dtype)
    if dJdP.shape != (b, m, n):
        raise DimensionMismatchError(f"dJdP must have shape {(b, m, n)}, got {dJdP.shape}")
    kern = kernels(prob.M.dtype)

    dM = ws.alloc((b, m, n), dtype=prob.M.dtype)
    dr = ws.alloc((b, m), dtype=prob.M.dtype)
    dc = ws.alloc((b, n), dtype=prob.M.dtype)
    for bi in range(b):
        if method == "unrolled":
            _unrolled_backward(
                prob.M[bi], prob.r[bi], prob.c[bi], prob.gamma,
                plan.iterations[bi], dJdP[bi], dM[bi], dr[bi], dc[bi],
            )
        else:
            _structured_backward(
                kern, plan.P[bi], prob.r[bi], prob.c[bi], prob.gamma,
                dJdP[bi], dM[bi], dr[bi], dc[bi], full=(method == "structured-full"),
            )
    return OtGradients(dJdM=dM, dJdr=dr, dJdc=dc)


def simplex_reparam_vjp(r, scale, g) -> np.ndarray:
    """Pull a gradient w.r.t. a simplex point back to unnormalized parameters.

    For r = r_tilde / sum(r_tilde) with ``scale = sum(r_tilde)``, the
    chain rule post-multiplies by (I - r 1^T) / scale, i.e.

        out = (g - <g, r> 1) / scale.

    The result is orthogonal to r_tilde and annihilates constant gradient
    shifts, making the marginal-gradient representatives unambiguous.
    """
    r = np.asarray(r, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    unbatched = r.ndim == 1
    r2 = np.atleast_2d(r)
    g2 = np.atleast_2d(g)
    if g2.shape != r2.shape:
        raise DimensionMismatchError(f"g and r must match, got {g.shape} vs {r.shape}")
    scale_arr = np.atleast_1d(np.asarray(scale, dtype=np.float64))
    if scale_arr.size == 1:
        scale_arr = np.full(r2.shape[0], float(scale_arr[0]))
    if (scale_arr <= 0).any():
        raise ValueError("scale must be positive")
    inner = np.einsum("bi,bi->b", g2, r2)
    out = (g2 - inner[:, None]) / scale_arr[:, None]
    return out[0] if unbatched else out


def assemble_marginal_system(plan: TransportPlan, gamma: float, r=None, c=None) -> np.ndarray:
    """Dense (m + n - 1) system solved by the structured backward.

    Built from the plan's own marginal sums by default (they equal r and c
    at convergence); explicit marginals may be supplied to override.  The
    first row constraint is the one dropped.
    """
    P = plan.P
    b, m, n = P.shape
    d = m - 1 + n
    out = ws.zeros((b, d, d), dtype=P.dtype)
    for bi in range(b):
        pb = P[bi]
        row_sums = np.asarray(r[bi]) if r is not None else pb.sum(axis=1)
        col_sums = np.asarray(c[bi]) if c is not None else pb.sum(axis=0)
        block = out[bi]
        if m > 1:
            block.flat[: (m - 1) * d : d + 1] = gamma * row_sums[1:]
            block[: m - 1, m - 1 :] = gamma * pb[1:]
            block[m - 1 :, : m - 1] = gamma * pb[1:].T
        block[m - 1 :, m - 1 :].flat[:: n + 1] = gamma * col_sums
    return out
