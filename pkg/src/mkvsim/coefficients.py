"""Model parameters and the advection/reaction coefficients.

The drift and the killing rate both depend on the accumulated kernel
convolution u = integral over [0,t] of the mollified density at the
current position, which is nonnegative and bounded by M_K * T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveDenominator
from .kernel import KernelSpec, kernel_constants


@dataclass(frozen=True)
class ModelParams:
    """Reaction rate lam, initial concentration c0, porosity-law
    coefficients phi0/phi1, and time horizon T."""

    lam: float = 1.0
    c0: float = 1.0
    phi0: float = 1.0
    phi1: float = 0.5
    T: float = 1.0

    def __post_init__(self):
        if self.lam < 0.0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        for name in ("c0", "phi0", "T"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0):
        raise ValueError(
            "negative accumulated convolution: the history field is corrupted"
        )
    return u


def drift_b(u, v, p: ModelParams):
    """Advection coefficient b(u, v).

    u is the accumulated kernel convolution, v its gradient counterpart.
    Scalar or array arguments.
    """
    u = _check_u(u)
    e = np.exp(-p.lam * u)
    den = p.phi0 + p.phi1 * p.c0 * e
    if np.any(den <= 0.0):
        raise NonpositiveDenominator(
            "phi0 + phi1*c0*exp(-lambda*u) reached a nonpositive value"
        )
    out = -p.phi1 * p.lam * p.c0 * e * np.asarray(v, dtype=float) / den
    return out if out.ndim else float(out)


def killing_rate(u, p: ModelParams):
    """Hazard rate lam * c0 * exp(-lam * u); nonincreasing in u.

    Computed as lam * concentration_c so the identity between the two
    holds bitwise, not just to roundoff.
    """
    out = p.lam * np.asarray(concentration_c(u, p))
    return out if out.ndim else float(out)


def concentration_c(u, p: ModelParams):
    """Concentration c0 * exp(-lam * u); killing_rate = lam * this."""
    u = _check_u(u)
    out = p.c0 * np.exp(-p.lam * u)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ParamBounds:
    """Lower/upper bounds of the porosity denominator on the feasible
    u-range, plus the induced drift bound."""

    m: float
    M: float
    M_b: float


def validate_params(p: ModelParams, k: KernelSpec) -> ParamBounds:
    """Endpoint check of the denominator over u in [0, M_K*T].

    The denominator is monotone in u so the two endpoints bracket it.
    Raises NonpositiveDenominator when the model is ill-posed.
    """
    kc = kernel_constants(k)
    u_max = kc.M_K * p.T
    endpoints = [
        p.phi0 + p.phi1 * p.c0,
        p.phi0 + p.phi1 * p.c0 * math.exp(-p.lam * u_max),
    ]
    m, M = min(endpoints), max(endpoints)
    if m <= 0.0:
        raise NonpositiveDenominator(
            f"phi0={p.phi0}, phi1={p.phi1}: denominator reaches {m:.6g} <= 0 "
            f"on u in [0, {u_max:.6g}]"
        )
    m_b = abs(p.phi1) * p.lam * p.c0 * kc.M_K1 * p.T / m
    return ParamBounds(m=m, M=M, M_b=m_b)
