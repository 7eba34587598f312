import math

import numpy as np
import pytest

from mkvsim import (GaussianInit, GridSpec, HistoryField, KernelSpec, Mode,
                    ModelParams, PointMassInit, SimConfig, ValidationError,
                    empirical_density, eval_K, fk_expectation, init_particles,
                    run, step)

P = ModelParams(lam=1.0, c0=1.0, phi0=1.0, phi1=0.5, T=1.0)
K = KernelSpec(0.5)
GRID = GridSpec(-12.0, 12.0, 1200)


def small_cfg(**kw):
    base = dict(N=64, dt=0.01, T=0.2, mode=Mode.HARD_KILL, seed=5,
                init=GaussianInit(0.0, 1.0), grid=GRID, snapshot_stride=5)
    base.update(kw)
    return SimConfig(**base)


def test_config_validation():
    with pytest.raises(ValidationError):
        small_cfg(N=0)
    with pytest.raises(ValidationError):
        small_cfg(dt=0.3)  # does not divide T


def test_point_mass_init():
    ps = init_particles(small_cfg(N=3, init=PointMassInit(0.0)))
    assert np.all(ps.x == 0.0)
    assert np.all(ps.Lambda == 0.0)
    assert np.all(ps.weight == 1.0)
    assert np.all(ps.alive)
    assert np.all(ps.Z > 0.0)


def test_init_gaussian_clt_bound():
    cfg = small_cfg(N=10_000)
    ps = init_particles(cfg)
    assert abs(np.mean(ps.x)) <= 4.0 / math.sqrt(cfg.N)
    assert np.std(ps.x) == pytest.approx(1.0, abs=0.05)


def test_init_determinism_bitwise():
    cfg = small_cfg(N=200)
    a = init_particles(cfg)
    b = init_particles(cfg)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.Z, b.Z)


def test_pure_diffusion_step_with_fixed_noise():
    cfg = small_cfg(N=1, init=PointMassInit(0.0))
    ps = init_particles(cfg)
    field = HistoryField(GRID, K)
    step(ps, field, P, K, 0.01, noise=np.array([1.0]), zero_drift=True,
         constant_rate=0.0)
    assert ps.x[0] == pytest.approx(math.sqrt(0.02), rel=1e-14)


def test_constant_rate_accumulates_exactly():
    cfg = small_cfg(N=1, init=PointMassInit(0.0))
    ps = init_particles(cfg)
    field = HistoryField(GRID, K)
    step(ps, field, P, K, 0.01, noise=np.array([0.0]), constant_rate=3.0)
    assert ps.Lambda[0] == pytest.approx(0.03, rel=1e-15)
    assert ps.weight[0] == pytest.approx(math.exp(-0.03), rel=1e-14)


def test_dead_particles_frozen():
    cfg = small_cfg(N=2, init=PointMassInit(0.0))
    ps = init_particles(cfg)
    ps.Lambda[0] = ps.Z[0] + 1.0
    ps.alive[0] = False
    ps.x[0] = np.nan
    lam_before = ps.Lambda[0]
    field = HistoryField(GRID, K)
    step(ps, field, P, K, 0.01, noise=np.array([1.0, 1.0]))
    assert np.isnan(ps.x[0])
    assert ps.Lambda[0] == lam_before
    assert not np.isnan(ps.x[1])


def test_no_killing_when_lambda_zero():
    p0 = ModelParams(lam=0.0, c0=1.0, phi0=1.0, phi1=0.5, T=0.2)
    for mode in Mode:
        out = run(small_cfg(mode=mode), p0, K)
        assert np.all(out.mass == 1.0)


def test_soft_constant_rate_mass_is_exact():
    out = run(small_cfg(N=32, mode=Mode.SOFT_WEIGHT), P, K,
              constant_rate=1.0, zero_drift=True)
    # deterministic compensator: every weight is exp(-r t) exactly
    assert out.mass[-1] == pytest.approx(math.exp(-0.2), rel=1e-12)


def test_hard_constant_rate_mass_binomial():
    out = run(small_cfg(N=4000, T=1.0, dt=0.01), P, K,
              constant_rate=1.0, zero_drift=True)
    p_surv = math.exp(-1.0)
    se = math.sqrt(p_surv * (1 - p_surv) / 4000)
    assert abs(out.mass[-1] - p_surv) <= 3 * se


def test_hard_mass_nonincreasing_step_function():
    out = run(small_cfg(N=500, T=0.5), P, K)
    assert np.all(np.diff(out.mass) <= 0)
    assert out.mass[0] == 1.0


def test_soft_mass_strictly_decreasing():
    out = run(small_cfg(N=100, mode=Mode.SOFT_WEIGHT), P, K)
    assert np.all(np.diff(out.mass) < 0)


def test_lambda_bounded_by_rate_cap():
    out = run(small_cfg(N=100, mode=Mode.SOFT_WEIGHT), P, K)
    for snap in out.snapshots:
        assert np.all(snap.Lambda <= P.lam * P.c0 * snap.t * (1 + 1e-12))


def test_run_determinism_bitwise():
    cfg = small_cfg(N=100)
    a = run(cfg, P, K)
    b = run(cfg, P, K)
    assert np.array_equal(a.mass, b.mass)
    assert np.array_equal(a.snapshots[-1].x, b.snapshots[-1].x,
                          equal_nan=True)
    assert np.array_equal(a.field.U, b.field.U)


def test_exchangeability_under_relabelling():
    cfg = small_cfg(N=8, mode=Mode.SOFT_WEIGHT)
    perm = [3, 1, 7, 0, 5, 2, 6, 4]
    a = init_particles(cfg)
    b = init_particles(cfg).reordered(perm)
    fa = HistoryField(GRID, K)
    fb = HistoryField(GRID, K)
    for _ in range(10):
        fa.deposit(a.x, a.weight, cfg.N, cfg.dt)
        fb.deposit(b.x, b.weight, cfg.N, cfg.dt)
        step(a, fa, P, K, cfg.dt)
        step(b, fb, P, K, cfg.dt)
    assert np.allclose(a.x[perm], b.x, rtol=1e-12)
    assert np.allclose(a.Lambda[perm], b.Lambda, rtol=1e-12)


def test_mode_consistency_at_monte_carlo_level():
    p = ModelParams(lam=1.0, c0=1.0, phi0=1.0, phi1=0.5, T=1.0)
    n = 4000
    hard = run(small_cfg(N=n, T=1.0, seed=21), p, K)
    soft = run(small_cfg(N=n, T=1.0, seed=22, mode=Mode.SOFT_WEIGHT), p, K)
    for snap_h, snap_s in zip(hard.snapshots, soft.snapshots):
        m_h = np.mean(snap_h.weights)
        m_s = np.mean(snap_s.weights)
        se_h = math.sqrt(max(m_h * (1 - m_h), 1e-30) / n)
        se_s = np.std(snap_s.weights) / math.sqrt(n)
        tol = 3 * math.hypot(se_h, se_s) + 1e-12
        assert abs(m_h - m_s) <= tol


def test_empirical_density_single_particle():
    cfg = small_cfg(N=1, init=PointMassInit(0.0))
    ps = init_particles(cfg)
    dens = empirical_density(ps, K, GRID)
    assert np.allclose(dens, eval_K(GRID.nodes, K) *
                       (np.abs(GRID.nodes) <= K.cutoff), rtol=1e-11, atol=1e-30)


def test_empirical_density_all_dead_is_zero():
    cfg = small_cfg(N=4, init=PointMassInit(0.0))
    ps = init_particles(cfg)
    ps.alive[:] = False
    ps.x[:] = np.nan
    assert not empirical_density(ps, K, GRID).any()


def test_empirical_density_integrates_to_mass():
    out = run(small_cfg(N=500, T=0.5), P, K)
    snap = out.snapshots[-1]
    from mkvsim.particles import snapshot_density
    dens = snapshot_density(snap, out.N, K, GRID)
    mass = np.sum(snap.weights) / out.N
    assert np.trapezoid(dens, dx=GRID.h) == pytest.approx(mass, abs=1e-6)


def test_fk_expectation():
    cfg = small_cfg(N=50, mode=Mode.SOFT_WEIGHT)
    ps = init_particles(cfg)
    ps.Lambda[:] = 0.3
    ps.weight[:] = np.exp(-ps.Lambda)
    assert fk_expectation(ps, lambda x: np.ones_like(x)) == pytest.approx(
        math.exp(-0.3), rel=1e-12)
    assert fk_expectation(ps, lambda x: np.zeros_like(x)) == 0.0
    ps.Lambda[:] = 0.0
    ps.weight[:] = 1.0
    assert fk_expectation(ps, lambda x: x) == pytest.approx(
        np.mean(ps.x), rel=1e-12)


def test_fk_expectation_requires_soft_mode():
    ps = init_particles(small_cfg(N=10))
    with pytest.raises(ValidationError):
        fk_expectation(ps, lambda x: x)


def test_death_times_recorded():
    out = run(small_cfg(N=200, T=1.0), P, K)
    assert len(out.death_times) == 200 - int(round(out.mass[-1] * 200))
    for idx, t in out.death_times:
        assert 0 < t <= 1.0
