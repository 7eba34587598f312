"""Interacting particle system with exponential-clock killing.

Two survival mechanisms for the same dynamics:

* HARD_KILL — each particle carries an Exp(1) threshold Z and dies the
  first step its accumulated hazard exceeds it; the empirical measure of
  alive particles estimates the sub-probability law.
* SOFT_WEIGHT — no particle ever dies; each carries the survival weight
  exp(-Lambda) and weighted averages estimate the same law.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .coefficients import ModelParams, drift_b, killing_rate
from .errors import ValidationError
from .history_field import GridSpec, HistoryField, HistoryOracle, kde_on_grid
from .kernel import KernelSpec

# RNG purpose tags: one independent substream per (seed, particle, purpose).
_TAG_INIT = 0
_TAG_NOISE = 1
_TAG_CLOCK = 2


def substream(seed: int, index: int, tag: int) -> np.random.Generator:
    """Deterministic, mutually independent substream for one particle."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(tag, index))
    return np.random.Generator(np.random.PCG64(ss))


class Mode(enum.Enum):
    HARD_KILL = "hard"
    SOFT_WEIGHT = "soft"


@dataclass(frozen=True)
class GaussianInit:
    mean: float = 0.0
    std: float = 1.0


@dataclass(frozen=True)
class PointMassInit:
    x0: float = 0.0


@dataclass(frozen=True)
class ExplicitInit:
    values: tuple


InitLaw = Union[GaussianInit, PointMassInit, ExplicitInit]


@dataclass(frozen=True)
class SimConfig:
    N: int = 10_000
    dt: float = 1e-3
    T: float = 1.0
    mode: Mode = Mode.HARD_KILL
    seed: int = 1
    init: InitLaw = GaussianInit()
    grid: GridSpec = GridSpec(-8.0, 8.0, 800)
    oracle_enabled: bool = False
    snapshot_stride: int = 10

    def __post_init__(self):
        if self.N < 1:
            raise ValidationError("sim.N must be >= 1")
        if self.dt <= 0.0 or self.T <= 0.0:
            raise ValidationError("sim.dt and sim.T must be positive")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-12 * max(1.0, n):
            raise ValidationError("sim.dt must divide sim.T")
        if self.snapshot_stride < 1:
            raise ValidationError("snapshot_stride must be >= 1")
        if isinstance(self.init, ExplicitInit) and len(self.init.values) != self.N:
            raise ValidationError("explicit init must list exactly N positions")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


class ParticleSystem:
    """Struct-of-arrays state of the N particles plus their noise streams.

    Dead particles (hard mode only) have alive=False and x=nan; the
    position at death is kept separately in death_pos. By the cemetery
    convention any coefficient evaluated at a dead particle is zero.
    """

    def __init__(self, x, Z, noise_gens, mode: Mode, seed: int):
        self.N = len(x)
        self.x = np.asarray(x, dtype=float)
        self.alive = np.ones(self.N, dtype=bool)
        self.Lambda = np.zeros(self.N)
        self.Z = np.asarray(Z, dtype=float)
        self.weight = np.ones(self.N)
        self.death_pos = np.full(self.N, np.nan)
        self.death_time = np.full(self.N, np.nan)
        self.noise_gens = list(noise_gens)
        self.mode = mode
        self.seed = seed
        self._noise_buf: Optional[np.ndarray] = None
        self._noise_ptr = 0

    def mode_weights(self) -> np.ndarray:
        """Estimator weights: survival indicator (hard) or exp(-Lambda)."""
        if self.mode is Mode.HARD_KILL:
            return self.alive.astype(float)
        return self.weight.copy()

    def mass_estimate(self) -> float:
        if self.mode is Mode.HARD_KILL:
            return float(np.count_nonzero(self.alive)) / self.N
        return float(np.mean(self.weight))

    def draw_noise(self, block: int = 256) -> np.ndarray:
        """Next standard-normal column, one value per particle.

        Values come from per-particle streams; buffering in blocks does
        not change the per-particle draw order, so results are identical
        for any block size.
        """
        if self._noise_buf is None or self._noise_ptr >= self._noise_buf.shape[1]:
            self._noise_buf = np.empty((self.N, block))
            for i, g in enumerate(self.noise_gens):
                self._noise_buf[i, :] = g.standard_normal(block)
            self._noise_ptr = 0
        col = self._noise_buf[:, self._noise_ptr].copy()
        self._noise_ptr += 1
        return col

    def reordered(self, perm: Sequence[int]) -> "ParticleSystem":
        """Relabelled copy: particle perm[i] of self becomes particle i,
        carrying its own RNG substreams along (exchangeability helper)."""
        perm = list(perm)
        ps = ParticleSystem(self.x[perm], self.Z[perm],
                            [self.noise_gens[i] for i in perm],
                            self.mode, self.seed)
        ps.alive = self.alive[perm].copy()
        ps.Lambda = self.Lambda[perm].copy()
        ps.weight = self.weight[perm].copy()
        ps.death_pos = self.death_pos[perm].copy()
        ps.death_time = self.death_time[perm].copy()
        return ps


def init_particles(cfg: SimConfig) -> ParticleSystem:
    """Draw initial positions and Exp(1) thresholds, one substream per
    particle per purpose, so results do not depend on worker count."""
    x = np.empty(cfg.N)
    if isinstance(cfg.init, ExplicitInit):
        x[:] = cfg.init.values
    elif isinstance(cfg.init, PointMassInit):
        x[:] = cfg.init.x0
    else:
        for i in range(cfg.N):
            g = substream(cfg.seed, i, _TAG_INIT)
            x[i] = cfg.init.mean + cfg.init.std * g.standard_normal()
    Z = np.empty(cfg.N)
    for i in range(cfg.N):
        Z[i] = substream(cfg.seed, i, _TAG_CLOCK).exponential(1.0)
    gens = [substream(cfg.seed, i, _TAG_NOISE) for i in range(cfg.N)]
    return ParticleSystem(x, Z, gens, cfg.mode, cfg.seed)


def step(ps: ParticleSystem, field: HistoryField, p: ModelParams,
         k: KernelSpec, dt: float, noise: Optional[np.ndarray] = None,
         constant_rate: Optional[float] = None,
         zero_drift: bool = False) -> np.ndarray:
    """One Euler-Maruyama step with left-endpoint hazard accumulation.

    Order: read field, accumulate Lambda, move, kill check. Dead
    particles are frozen. Returns the indices newly killed this step.
    """
    active = ps.alive if ps.mode is Mode.HARD_KILL else np.ones(ps.N, bool)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return idx
    xa = ps.x[idx]
    u = field.eval_U(xa)
    if constant_rate is not None:
        rate = np.full(idx.size, constant_rate)
    else:
        rate = killing_rate(u, p)
    if zero_drift:
        b = np.zeros(idx.size)
    else:
        b = np.asarray(drift_b(u, field.eval_V(xa), p))
    ps.Lambda[idx] += rate * dt
    ps.weight[idx] = np.exp(-ps.Lambda[idx])
    xi = ps.draw_noise() if noise is None else np.asarray(noise, dtype=float)
    ps.x[idx] = xa + b * dt + math.sqrt(2.0 * dt) * xi[idx]
    if ps.mode is Mode.HARD_KILL:
        newly_dead = idx[ps.Lambda[idx] >= ps.Z[idx]]
        if newly_dead.size:
            ps.death_pos[newly_dead] = ps.x[newly_dead]
            ps.alive[newly_dead] = False
            ps.x[newly_dead] = np.nan
        return newly_dead
    return np.empty(0, dtype=int)


@dataclass
class Snapshot:
    """Per-particle state plus field readings at one output time."""

    t: float
    x: np.ndarray          # nan at dead particles
    weights: np.ndarray    # mode weights at time t
    alive: np.ndarray
    Lambda: np.ndarray
    u: np.ndarray          # accumulated convolution at each particle (0 if dead)
    v: np.ndarray


@dataclass
class SimOutput:
    times: np.ndarray
    mass: np.ndarray
    snapshots: list
    field: HistoryField
    oracle: Optional[HistoryOracle]
    death_times: list
    mode: Mode
    N: int
    cfg: SimConfig


def _take_snapshot(ps: ParticleSystem, field: HistoryField, t: float) -> Snapshot:
    u = np.zeros(ps.N)
    v = np.zeros(ps.N)
    idx = np.flatnonzero(ps.alive)
    if idx.size:
        u[idx] = field.eval_U(ps.x[idx])
        v[idx] = field.eval_V(ps.x[idx])
    return Snapshot(t=t, x=ps.x.copy(), weights=ps.mode_weights(),
                    alive=ps.alive.copy(), Lambda=ps.Lambda.copy(), u=u, v=v)


def run(cfg: SimConfig, p: ModelParams, k: KernelSpec,
        constant_rate: Optional[float] = None,
        zero_drift: bool = False) -> SimOutput:
    """Full particle simulation over [0, T].

    Per step: record outputs, deposit the current (pre-move) state into
    the history field, then advance every live particle.
    """
    ps = init_particles(cfg)
    field = HistoryField(cfg.grid, k)
    oracle = HistoryOracle(k) if cfg.oracle_enabled else None
    n_steps = cfg.n_steps
    times = np.arange(n_steps + 1) * cfg.dt
    mass = np.empty(n_steps + 1)
    snapshots: list = []
    death_times: list = []
    for step_idx in range(n_steps + 1):
        t = times[step_idx]
        if abs(field.t_accumulated - t) > 1e-9 * max(1.0, t):
            raise RuntimeError("history field out of sync with clock")
        mass[step_idx] = ps.mass_estimate()
        if step_idx % cfg.snapshot_stride == 0 or step_idx == n_steps:
            snapshots.append(_take_snapshot(ps, field, t))
        if step_idx == n_steps:
            break
        if ps.mode is Mode.HARD_KILL:
            dep_idx = np.flatnonzero(ps.alive)
            dep_pos = ps.x[dep_idx]
            dep_w = np.ones(dep_idx.size)
        else:
            dep_pos = ps.x
            dep_w = ps.weight.copy()
        field.deposit(dep_pos, dep_w, cfg.N, cfg.dt)
        if oracle is not None:
            oracle.record(dep_pos, dep_w, cfg.N, cfg.dt)
        newly_dead = step(ps, field, p, k, cfg.dt,
                          constant_rate=constant_rate, zero_drift=zero_drift)
        for i in newly_dead:
            death_times.append((int(i), float(t + cfg.dt)))
    return SimOutput(times=times, mass=mass, snapshots=snapshots, field=field,
                     oracle=oracle, death_times=death_times, mode=cfg.mode,
                     N=cfg.N, cfg=cfg)


def empirical_density(ps: ParticleSystem, k: KernelSpec,
                      grid: GridSpec) -> np.ndarray:
    """Mollified empirical density (K * mu_N) on the grid nodes."""
    w = ps.mode_weights()
    idx = np.flatnonzero(ps.alive)
    dens, _ = kde_on_grid(ps.x[idx], w[idx], ps.N, k, grid)
    return dens


def snapshot_density(snap: Snapshot, N: int, k: KernelSpec,
                     grid: GridSpec) -> np.ndarray:
    """Same as empirical_density but from a stored snapshot."""
    idx = np.flatnonzero(snap.alive)
    dens, _ = kde_on_grid(snap.x[idx], snap.weights[idx], N, k, grid)
    return dens


def fk_expectation(ps: ParticleSystem, f: Callable) -> float:
    """Feynman-Kac estimator (1/N) sum f(x_i) exp(-Lambda_i); soft mode."""
    if ps.mode is not Mode.SOFT_WEIGHT:
        raise ValidationError("fk_expectation requires a soft-weight system")
    return float(np.mean(np.asarray(f(ps.x), dtype=float) * ps.weight))
