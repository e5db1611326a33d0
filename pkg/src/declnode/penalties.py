"""Robust penalty functions and their pooling coefficients.

Each penalty phi(z; alpha) of the distance z >= 0 contributes a per-point
Hessian block of the form kappa1(z) I + kappa2(z) d d^T, where d is the
residual vector of norm z.  The coefficients are

    kappa1(z) = phi'(z) / z        (>= 0)
    kappa2(z) = (phi''(z) - kappa1(z)) / z**2    (<= 0)

evaluated in closed form below, with the z = 0 values taken as the analytic
limits.  kappa2 is identically zero for the quadratic and truncated
quadratic penalties, which enables a diagonal fast path in the pooling
backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import workspace as ws
from .backend import FAMILY_IDS, kernels

__all__ = [
    "PENALTY_FAMILIES",
    "PenaltyKind",
    "KappaPair",
    "penalty_from_name",
    "phi_value",
    "kappa",
    "has_identically_zero_kappa2",
]

PENALTY_FAMILIES = ("quadratic", "pseudo-huber", "huber", "welsch", "trunc-quad")


@dataclass(frozen=True)
class PenaltyKind:
    """A penalty family together with its scale parameter alpha > 0."""

    family: str
    alpha: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in PENALTY_FAMILIES:
            raise ValueError(
                f"unknown penalty family {self.family!r}; "
                f"expected one of {PENALTY_FAMILIES}"
            )
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")

    @property
    def family_id(self) -> int:
        return FAMILY_IDS[self.family]


class KappaPair(NamedTuple):
    kappa1: np.ndarray
    kappa2: np.ndarray


def penalty_from_name(name: str, alpha: float = 1.0) -> PenaltyKind:
    """Resolve a case-insensitive penalty name, as used by the CLI."""
    return PenaltyKind(family=name.strip().lower(), alpha=alpha)


def _as_z_array(z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=np.float64)
    scalar = z.ndim == 0
    z = np.ascontiguousarray(np.atleast_1d(z))
    if (z < 0).any():
        raise ValueError("z must be non-negative")
    return z, scalar


def phi_value(kind: PenaltyKind, z):
    """Penalty value phi(z; alpha) for scalar or array z >= 0."""
    z, scalar = _as_z_array(z)
    out = ws.alloc(z.shape)
    kernels().phi_kernel(kind.family_id, kind.alpha, z, out)
    return float(out[0]) if scalar else out


def kappa(kind: PenaltyKind, z) -> KappaPair:
    """Coefficients (kappa1, kappa2) for scalar or array z >= 0."""
    z, scalar = _as_z_array(z)
    k1 = ws.alloc(z.shape)
    k2 = ws.alloc(z.shape)
    kernels().kappa_kernel(kind.family_id, kind.alpha, z, k1, k2)
    if scalar:
        return KappaPair(float(k1[0]), float(k2[0]))
    return KappaPair(k1, k2)


def has_identically_zero_kappa2(kind: PenaltyKind) -> bool:
    """True for families whose kappa2 vanishes for every z."""
    return kind.family in ("quadratic", "trunc-quad")
