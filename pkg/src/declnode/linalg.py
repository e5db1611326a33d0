"""Dense symmetric positive definite linear algebra.

Factorizations and solves are delegated to LAPACK (via NumPy/SciPy); this
module owns the error contract, validation, batching, and the in-place
variants the backward passes use to keep workspace accounting exact.

Matrices are dense float arrays in row-major order.  A symmetric matrix
stored row-major is its own column-major transpose, which the in-place
helpers exploit to call LAPACK without copies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.linalg import lapack as _lapack

from .errors import DimensionMismatchError, NotPositiveDefiniteError

__all__ = [
    "CholeskyFactor",
    "cholesky_factorize",
    "cholesky_solve",
    "cholesky_factorize_batch",
    "cholesky_solve_batch",
]


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor L with L @ L.T equal to the factorized matrix."""

    dim: int
    lower: np.ndarray


def _validate_spd_input(a: np.ndarray, regularization: float) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    if not np.issubdtype(a.dtype, np.floating):
        a = a.astype(np.float64)
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    norm = np.linalg.norm(a)
    if norm > 0 and np.linalg.norm(a - a.T) > 1e-8 * norm:
        raise ValueError("matrix is not symmetric within 1e-8 relative tolerance")
    if regularization < 0:
        raise ValueError("regularization must be non-negative")
    return a


def cholesky_factorize(a, regularization: float = 0.0) -> CholeskyFactor:
    """Factor a symmetric positive definite matrix (plus optional ridge).

    Returns the lower-triangular L with (a + regularization * I) = L @ L.T.
    Raises :class:`NotPositiveDefiniteError` when a pivot is non-positive,
    which signals a degenerate matrix; callers may retry with a larger
    ``regularization``.
    """
    a = _validate_spd_input(a, regularization)
    if regularization:
        a = a + regularization * np.eye(a.shape[0], dtype=a.dtype)
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(
            "matrix is not positive definite; consider a larger regularization"
        ) from exc
    return CholeskyFactor(dim=a.shape[0], lower=lower)


def cholesky_solve(factor: CholeskyFactor, rhs) -> np.ndarray:
    """Solve (L @ L.T) x = rhs for one or more right-hand sides."""
    rhs = np.asarray(rhs)
    if rhs.ndim not in (1, 2) or rhs.shape[0] != factor.dim:
        raise DimensionMismatchError(
            f"rhs must have {factor.dim} rows, got shape {rhs.shape}"
        )
    return scipy.linalg.cho_solve((factor.lower, True), rhs)


def cholesky_factorize_batch(a, regularization: float = 0.0) -> list[CholeskyFactor]:
    """Factor a stack of matrices (k, d, d), sequentially and deterministically."""
    a = np.asarray(a)
    if a.ndim != 3:
        raise DimensionMismatchError(f"expected a (k, d, d) stack, got shape {a.shape}")
    return [cholesky_factorize(a[i], regularization) for i in range(a.shape[0])]


def cholesky_solve_batch(factors, rhs) -> np.ndarray:
    """Solve against a stack of factors; rhs has shape (k, d) or (k, d, p)."""
    rhs = np.asarray(rhs)
    if rhs.ndim not in (2, 3) or rhs.shape[0] != len(factors):
        raise DimensionMismatchError(
            f"rhs must stack {len(factors)} right-hand sides, got shape {rhs.shape}"
        )
    return np.stack([cholesky_solve(f, rhs[i]) for i, f in enumerate(factors)])


# In-place LAPACK paths used by the backward passes.  These overwrite their
# inputs (the factor lives in the matrix buffer, the solution in the rhs
# buffer) so no buffers beyond the caller's accounted ones are created.


def spd_factor_inplace(h: np.ndarray) -> None:
    """Overwrite symmetric C-contiguous ``h`` with its Cholesky factor."""
    if h.shape[0] == 0:
        return
    (potrf,) = _lapack.get_lapack_funcs(("potrf",), (h,))
    factored, info = potrf(h.T, lower=1, clean=0, overwrite_a=1)
    if info > 0:
        raise NotPositiveDefiniteError(
            "matrix is not positive definite; consider a larger regularization"
        )
    if info < 0:
        raise RuntimeError(f"potrf failed with illegal argument {-info}")
    if not np.shares_memory(factored, h):  # pragma: no cover - layout guard
        h.T[...] = factored


def spd_solve_factored(h: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve using a factor from :func:`spd_factor_inplace`, overwriting ``b``."""
    if h.shape[0] == 0:
        return b
    (potrs,) = _lapack.get_lapack_funcs(("potrs",), (h, b))
    x, info = potrs(h.T, b, lower=1, overwrite_b=1)
    if info != 0:
        raise RuntimeError(f"potrs failed with illegal argument {-info}")
    return x


def spd_solve_inplace(h: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Factor ``h`` and solve h x = b, overwriting both buffers."""
    spd_factor_inplace(h)
    return spd_solve_factored(h, b)


def spd_invert_inplace(h: np.ndarray) -> None:
    """Overwrite symmetric C-contiguous ``h`` with its explicit inverse."""
    d = h.shape[0]
    if d == 0:
        return
    spd_factor_inplace(h)
    (potri,) = _lapack.get_lapack_funcs(("potri",), (h,))
    inverted, info = potri(h.T, lower=1, overwrite_c=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"potri failed with info {info}")
    if not np.shares_memory(inverted, h):  # pragma: no cover - layout guard
        h.T[...] = inverted
    # potri fills one triangle; mirror it row by row to avoid a d*d temp.
    for i in range(1, d):
        h[i, :i] = h[:i, i]
