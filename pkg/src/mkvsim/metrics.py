"""Quantitative comparison of particle estimators and PDE solutions.

Grid L1 gaps between identically mollified densities, 1D Wasserstein
distances between equal-size samples, and the weak-form residual of the
representation identity (test-function integrals of the density against
the accumulated drift/reaction terms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .coefficients import ModelParams, drift_b, killing_rate
from .errors import UnequalSupportSizes
from .history_field import GridSpec
from .kernel import KernelSpec, eval_K
from .particles import Mode, SimOutput, snapshot_density
from .pde import DensitySolution


def l1_gap(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """Riemann L1 distance sum |a - b| * h between grid functions."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError("l1_gap requires equal-length arrays")
    return float(np.sum(np.abs(a - b)) * h)


def w1_empirical(xs, ys) -> float:
    """W1 between two equal-size empirical measures on R
    (mean absolute difference of order statistics)."""
    xs = np.sort(np.asarray(xs, float))
    ys = np.sort(np.asarray(ys, float))
    if xs.shape != ys.shape or xs.size == 0:
        raise UnequalSupportSizes("samples must be nonempty and equal-sized")
    return float(np.mean(np.abs(xs - ys)))


def w2_empirical(xs, ys) -> float:
    """W2 variant of w1_empirical."""
    xs = np.sort(np.asarray(xs, float))
    ys = np.sort(np.asarray(ys, float))
    if xs.shape != ys.shape or xs.size == 0:
        raise UnequalSupportSizes("samples must be nonempty and equal-sized")
    return float(math.sqrt(np.mean(np.square(xs - ys))))


@dataclass(frozen=True)
class GaussianBump:
    """Test function exp(-(x-a)^2 / (2 w^2)), optionally multiplied by x.

    Bounded with bounded first and second derivatives, as the weak
    formulation requires.
    """

    a: float = 0.0
    w: float = 1.0
    x_weighted: bool = False

    def _core(self, x):
        return np.exp(-0.5 * ((np.asarray(x, float) - self.a) / self.w) ** 2)

    def f(self, x):
        g = self._core(x)
        return np.asarray(x, float) * g if self.x_weighted else g

    def grad(self, x):
        x = np.asarray(x, float)
        g = self._core(x)
        dg = -(x - self.a) / (self.w ** 2) * g
        if self.x_weighted:
            return g + x * dg
        return dg

    def lap(self, x):
        x = np.asarray(x, float)
        g = self._core(x)
        z = (x - self.a) / (self.w ** 2)
        dg = -z * g
        d2g = (z * z - 1.0 / self.w ** 2) * g
        if self.x_weighted:
            return 2.0 * dg + x * d2g
        return d2g


DEFAULT_TEST_FUNCTIONS = (GaussianBump(0.0, 1.0, False),
                          GaussianBump(0.0, 1.0, True))


def weak_form_residual_particles(tf: GaussianBump, out: SimOutput,
                                 p: ModelParams,
                                 t: Optional[float] = None,
                                 constant_rate: Optional[float] = None,
                                 zero_drift: bool = False) -> float:
    """LHS(t) - RHS(t) of the weak identity from particle snapshots.

    Spatial integrals are weighted particle averages; time integrals use
    the trapezoid rule over the stored snapshot times. Exactly zero at
    t = 0 because both sides reduce to the same initial average.
    """
    snaps = out.snapshots
    if t is None:
        t = float(snaps[-1].t)
    times = np.array([s.t for s in snaps])
    upto = np.flatnonzero(times <= t + 1e-12)
    if abs(times[upto[-1]] - t) > 1e-9:
        raise ValueError("t must be one of the stored snapshot times")

    def averages(s):
        idx = np.flatnonzero(s.alive)
        x = s.x[idx]
        w = s.weights[idx]
        fbar = np.sum(tf.f(x) * w) / out.N
        lapbar = np.sum(tf.lap(x) * w) / out.N
        if zero_drift:
            driftbar = 0.0
        else:
            b = drift_b(s.u[idx], s.v[idx], p)
            driftbar = np.sum(tf.grad(x) * b * w) / out.N
        if constant_rate is not None:
            rate = constant_rate
        else:
            rate = killing_rate(s.u[idx], p)
        sinkbar = np.sum(tf.f(x) * rate * w) / out.N
        return fbar, lapbar, driftbar, sinkbar

    vals = np.array([averages(snaps[i]) for i in upto])
    ts = times[upto]
    lhs = vals[-1, 0]
    rhs = (vals[0, 0]
           + np.trapezoid(vals[:, 1], ts)
           + np.trapezoid(vals[:, 2], ts)
           - np.trapezoid(vals[:, 3], ts))
    return float(lhs - rhs)


def weak_form_residual_pde(tf: GaussianBump, sol: DensitySolution,
                           p: ModelParams,
                           t: Optional[float] = None,
                           constant_rate: Optional[float] = None,
                           zero_drift: bool = False) -> float:
    """Same residual with all integrals by grid quadrature on the stored
    PDE snapshots."""
    if t is None:
        t = float(sol.times[-1])
    upto = np.flatnonzero(sol.times <= t + 1e-12)
    if abs(sol.times[upto[-1]] - t) > 1e-9:
        raise ValueError("t must be one of the stored output times")
    xs = sol.grid.nodes
    h = sol.grid.h
    fx = tf.f(xs)
    gx = tf.grad(xs)
    lx = tf.lap(xs)

    def space_integrals(j):
        rho = sol.rho[j]
        lap_i = float(np.sum(lx * rho) * h)
        if zero_drift:
            drift_i = 0.0
        else:
            b = np.asarray(drift_b(np.clip(sol.cu[j], 0.0, None), sol.cv[j], p))
            drift_i = float(np.sum(gx * b * rho) * h)
        if constant_rate is not None:
            rate = constant_rate
        else:
            rate = killing_rate(np.clip(sol.cu[j], 0.0, None), p)
        sink_i = float(np.sum(fx * rate * rho) * h)
        return float(np.sum(fx * rho) * h), lap_i, drift_i, sink_i

    vals = np.array([space_integrals(j) for j in upto])
    ts = sol.times[upto]
    lhs = vals[-1, 0]
    rhs = (vals[0, 0]
           + np.trapezoid(vals[:, 1], ts)
           + np.trapezoid(vals[:, 2], ts)
           - np.trapezoid(vals[:, 3], ts))
    return float(lhs - rhs)


@dataclass
class ComparisonReport:
    times: np.ndarray
    l1_density_gap: list
    mass_gap: list
    particle_mass: list
    pde_mass: list
    w1: list
    weak_residuals: dict = dc_field(default_factory=dict)


def _pde_quantile_samples(rho: np.ndarray, grid: GridSpec, n: int) -> np.ndarray:
    """Deterministic equal-mass samples from a grid density via inverse CDF."""
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * grid.h)])
    total = cdf[-1]
    if total <= 0.0:
        raise ValueError("cannot sample from a zero density")
    q = (np.arange(n) + 0.5) / n * total
    return np.interp(q, cdf, grid.nodes)


def _weighted_quantile_samples(x: np.ndarray, w: np.ndarray,
                               n: int) -> np.ndarray:
    """Equal-mass samples from a weighted empirical measure (normalized)."""
    order = np.argsort(x)
    xs = x[order]
    cw = np.cumsum(w[order])
    total = cw[-1]
    if total <= 0.0:
        raise ValueError("cannot sample from a zero-mass measure")
    q = (np.arange(n) + 0.5) / n * total
    return xs[np.searchsorted(cw, q)]


def mollify_grid_density(rho: np.ndarray, k: KernelSpec,
                         grid: GridSpec) -> np.ndarray:
    """K * (rho dx) by truncated quadrature; makes the PDE side comparable
    to the kernel-smoothed particle density."""
    from .pde import _convolve_same
    m = int(math.floor(k.cutoff / grid.h))
    offsets = np.arange(-m, m + 1) * grid.h
    return _convolve_same(rho, eval_K(offsets, k), grid.h)


def compare_runs(out: SimOutput, sol: DensitySolution, k: KernelSpec,
                 grid: GridSpec, with_w1: bool = True) -> ComparisonReport:
    """Fill a report at the PDE output times (particle snapshots must
    exist at the same times). Both densities are mollified by the same
    kernel so the gap isolates the representation error."""
    snap_times = {round(s.t, 12): s for s in out.snapshots}
    l1s, mgaps, pmass, dmass, w1s = [], [], [], [], []
    for j, t in enumerate(sol.times):
        key = round(float(t), 12)
        if key not in snap_times:
            raise ValueError(f"no particle snapshot at t={t}")
        snap = snap_times[key]
        u_n = snapshot_density(snap, out.N, k, grid)
        u_pde = mollify_grid_density(sol.rho[j], k, grid)
        l1s.append(l1_gap(u_n, u_pde, grid.h))
        m_p = float(np.sum(snap.weights)) / out.N
        m_d = float(np.trapezoid(sol.rho[j], dx=grid.h))
        pmass.append(m_p)
        dmass.append(m_d)
        mgaps.append(abs(m_p - m_d))
        if with_w1 and np.any(snap.alive) and m_d > 0.0:
            # sub-probability convention: normalize both sides, compare
            # the masses separately via mass_gap
            n_s = min(2000, int(np.count_nonzero(snap.alive)))
            xs = _weighted_quantile_samples(snap.x[snap.alive],
                                            snap.weights[snap.alive], n_s)
            ys = _pde_quantile_samples(sol.rho[j], grid, n_s)
            w1s.append(w1_empirical(xs, ys))
        else:
            w1s.append(float("nan"))
    return ComparisonReport(times=sol.times.copy(), l1_density_gap=l1s,
                            mass_gap=mgaps, particle_mass=pmass,
                            pde_mass=dmass, w1=w1s)
