"""Finite-difference vector-Jacobian products and comparison reports.

The oracle here differentiates whatever the forward callable actually
computes.  When checking implicit gradients, run the inner solves at
tolerance 1e-12 or tighter so the finite differences probe the solution
map rather than solver noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError

__all__ = ["VjpReport", "fd_vjp", "compare_vjp"]


@dataclass
class VjpReport:
    max_abs_err: float
    max_rel_err: float
    passed: bool
    per_coordinate: Optional[np.ndarray] = None


def fd_vjp(forward: Callable, x, v, step: float | None = None) -> np.ndarray:
    """Central-difference estimate of v^T (dy/dx) for a black-box forward.

    ``x`` is flat (N,); ``forward`` maps it to an array whose raveled form
    matches ``v``.  ``step`` fixes the probe size; by default each
    coordinate uses 1e-6 * max(1, |x_i|).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    g = np.empty(x.size)
    xp = x.copy()
    for i in range(x.size):
        h = step if step is not None else 1e-6 * max(1.0, abs(x[i]))
        xp[i] = x[i] + h
        yp = np.asarray(forward(xp), dtype=np.float64).ravel()
        xp[i] = x[i] - h
        ym = np.asarray(forward(xp), dtype=np.float64).ravel()
        xp[i] = x[i]
        if not (np.isfinite(yp).all() and np.isfinite(ym).all()):
            raise NonFiniteError(f"forward returned non-finite values near coordinate {i}")
        if yp.size != v.size:
            raise DimensionMismatchError(
                f"forward output has {yp.size} entries but v has {v.size}"
            )
        g[i] = (v @ yp - v @ ym) / (2 * h)
    return g


def compare_vjp(
    analytic,
    numeric,
    rtol: float,
    atol: float = 0.0,
    keep_per_coordinate: bool = False,
) -> VjpReport:
    """Elementwise |a - b| <= atol + rtol * |b| check, aggregated.

    ``max_rel_err`` is normalized so that ``passed`` is exactly
    ``max_rel_err <= rtol`` when ``rtol > 0``: the denominator is
    |numeric| + atol / rtol, which folds the absolute floor into the
    relative score.
    """
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    if analytic.size != numeric.size:
        raise DimensionMismatchError(
            f"length mismatch: {analytic.size} vs {numeric.size}"
        )
    if rtol < 0 or atol < 0:
        raise ValueError("tolerances must be non-negative")
    diff = np.abs(analytic - numeric)
    max_abs = float(diff.max(initial=0.0))
    if rtol > 0:
        denom = np.abs(numeric) + atol / rtol
    else:
        denom = np.abs(numeric)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        rel = np.where(diff == 0, 0.0, diff / denom)
    max_rel = float(np.max(rel, initial=0.0))
    passed = max_rel <= rtol if rtol > 0 else max_abs <= atol
    return VjpReport(
        max_abs_err=max_abs,
        max_rel_err=max_rel,
        passed=bool(passed),
        per_coordinate=rel if keep_per_coordinate else None,
    )
