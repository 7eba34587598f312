"""Gaussian mollifier used for the nonlocal interaction.

The kernel, its first two derivatives, and the bound/Lipschitz constants
every other module relies on. Constants come from closed forms of the
Gaussian and are cross-checked against grid maximization in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Beyond this many standard deviations the kernel is below 1e-22 and is
# treated as exactly zero by all truncated sums.
SUPPORT_RADIUS_SIGMAS = 10.0


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian mollifier of bandwidth ``sigma`` (same units as positions)."""

    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"kernel sigma must be positive, got {self.sigma}")

    @property
    def cutoff(self) -> float:
        """Truncation radius of the effective support."""
        return SUPPORT_RADIUS_SIGMAS * self.sigma

    @property
    def norm(self) -> float:
        return 1.0 / math.sqrt(2.0 * math.pi * self.sigma * self.sigma)


def eval_K(x, spec: KernelSpec):
    """Kernel value; accepts scalars or arrays."""
    s2 = spec.sigma * spec.sigma
    return spec.norm * np.exp(-np.square(x) / (2.0 * s2))


def eval_gradK(x, spec: KernelSpec):
    """First derivative of the kernel; odd function of x."""
    s2 = spec.sigma * spec.sigma
    return -(np.asarray(x, dtype=float) / s2) * eval_K(x, spec)


def eval_hessK(x, spec: KernelSpec):
    """Second derivative of the kernel."""
    s2 = spec.sigma * spec.sigma
    xx = np.square(np.asarray(x, dtype=float))
    return (xx / (s2 * s2) - 1.0 / s2) * eval_K(x, spec)


@dataclass(frozen=True)
class KernelConstants:
    """Bound and Lipschitz constants of the mollifier.

    ``M_K``/``M_K1``/``M_K2`` bound the kernel and its first two
    derivatives; ``L_K`` and ``L_K1`` are the Lipschitz constants of the
    kernel and of its gradient. For the 1D Gaussian: L_K = M_K1 and
    L_K1 = M_K2.
    """

    M_K: float
    M_K1: float
    M_K2: float
    L_K: float = field(default=0.0)
    L_K1: float = field(default=0.0)


def kernel_constants(spec: KernelSpec) -> KernelConstants:
    """Closed-form constants of the Gaussian kernel.

    sup|K| is at 0, sup|K'| at x = sigma, sup|K''| at 0.
    """
    m_k = float(eval_K(0.0, spec))
    m_k1 = float(abs(eval_gradK(spec.sigma, spec)))
    m_k2 = float(abs(eval_hessK(0.0, spec)))
    return KernelConstants(M_K=m_k, M_K1=m_k1, M_K2=m_k2, L_K=m_k1, L_K1=m_k2)


def check_normalization(spec: KernelSpec, quadrature_step: float) -> float:
    """Trapezoidal integral of K over the truncated support.

    Must come out within 1e-8 of 1 for a valid mollifier bandwidth.
    """
    if quadrature_step <= 0.0:
        raise ValueError("quadrature_step must be positive")
    half = spec.cutoff
    n = max(2, int(math.ceil(2.0 * half / quadrature_step)))
    xs = np.linspace(-half, half, n + 1)
    return float(np.trapezoid(eval_K(xs, spec), xs))
