import math

import numpy as np
import pytest

from mkvsim import (CFLViolation, GridSpec, KernelSpec, MassAtBoundary,
                    ModelParams, check_cfl, gaussian_profile, pde_mass,
                    solve_pde)

P = ModelParams(lam=1.0, c0=1.0, phi0=1.0, phi1=0.5, T=1.0)
K = KernelSpec(0.5)
GRID = GridSpec(-8.0, 8.0, 320)  # h = 0.05


def heat_kernel(grid, t, s0=1.0):
    var = s0 * s0 + 2.0 * t
    return np.exp(-0.5 * grid.nodes ** 2 / var) / math.sqrt(2 * math.pi * var)


def test_cfl_guards():
    check_cfl(1e-3, 0.05, 0.0)
    with pytest.raises(CFLViolation):
        check_cfl(2e-3, 0.05, 0.0)  # diffusion limit 0.8*h^2/2 = 1e-3
    with pytest.raises(CFLViolation):
        check_cfl(9e-4, 0.05, 100.0)  # advection limit 0.8*h/100 = 4e-4


def test_input_validation():
    rho0 = gaussian_profile(GRID, 0.0, 1.0)
    with pytest.raises(ValueError):
        solve_pde(rho0[:-1], P, K, GRID, 1e-3, 0.1)
    with pytest.raises(ValueError):
        solve_pde(-rho0, P, K, GRID, 1e-3, 0.1)
    with pytest.raises(ValueError):
        solve_pde(3.0 * rho0, P, K, GRID, 1e-3, 0.1)
    with pytest.raises(ValueError):
        solve_pde(rho0, P, K, GRID, 3e-4, 0.1)  # dt does not divide T
    with pytest.raises(ValueError):
        solve_pde(rho0, P, K, GRID, 1e-3, 0.1,
                  output_times=np.array([0.0, 0.0505]))


def test_zero_density_is_fixed_point():
    sol = solve_pde(np.zeros(GRID.n_nodes), P, K, GRID, 1e-3, 0.05)
    assert not sol.rho.any()
    assert np.all(sol.mass == 0.0)


def test_heat_equation_analytic():
    p0 = ModelParams(lam=0.0, c0=1.0, phi0=1.0, phi1=0.5, T=0.25)
    rho0 = heat_kernel(GRID, 0.0)
    sol = solve_pde(rho0, p0, K, GRID, 5e-4, 0.25)
    err = np.max(np.abs(sol.rho[-1] - heat_kernel(GRID, 0.25)))
    assert err <= 2e-3
    assert np.allclose(sol.mass, sol.mass[0], atol=1e-6)


def test_constant_rate_exponential_mass_decay():
    rho0 = gaussian_profile(GRID, 0.0, 1.0)
    sol = solve_pde(rho0, P, K, GRID, 5e-4, 0.5, constant_rate=1.0,
                    zero_drift=True)
    m0 = sol.mass[0]
    # forward Euler on m' = -m up to boundary leakage: the recursion
    # m_{s+1} = m_s (1 - dt) + boundary_flux_s holds to roundoff
    expected = m0
    for s in range(len(sol.step_times) - 1):
        expected = expected * (1 - 5e-4) + sol.ledger.boundary_flux[s]
        assert sol.mass[s + 1] == pytest.approx(expected, rel=1e-11)
    assert abs(sol.mass[-1] / m0 - math.exp(-0.5)) <= 0.5 * 5e-4


def test_mass_ledger_closes_to_roundoff():
    rho0 = gaussian_profile(GRID, 0.0, 1.0)
    sol = solve_pde(rho0, P, K, GRID, 5e-4, 0.2)
    led = sol.ledger
    for s in range(len(led.reaction_sink)):
        resid = (sol.mass[s + 1] - sol.mass[s] + led.reaction_sink[s]
                 - led.boundary_flux[s] - led.clipped[s])
        assert abs(resid) <= 1e-12


def test_mass_nonincreasing_and_bounded():
    rho0 = gaussian_profile(GRID, 0.0, 1.0)
    sol = solve_pde(rho0, P, K, GRID, 5e-4, 0.5)
    assert np.all(sol.mass <= 1.0 + 1e-12)
    assert np.all(np.diff(sol.mass) <= 1e-14)


def test_nonlocal_coefficient_bounds():
    from mkvsim import kernel_constants
    kc = kernel_constants(K)
    rho0 = gaussian_profile(GRID, 0.0, 1.0)
    sol = solve_pde(rho0, P, K, GRID, 5e-4, 0.5)
    for j, t in enumerate(sol.times):
        assert np.all(sol.cu[j] >= 0.0)
        assert np.all(sol.cu[j] <= kc.M_K * t + 1e-10)
        assert np.all(np.abs(sol.cv[j]) <= kc.M_K1 * t + 1e-10)


def test_self_convergence_under_refinement():
    # coarse vs half-step errors against a fine reference should shrink
    # by a factor consistent with a first-order-in-time scheme
    p = ModelParams(lam=1.0, c0=1.0, phi0=1.0, phi1=0.5, T=0.2)
    T = 0.2

    def run(n_cells, dt):
        g = GridSpec(-6.0, 6.0, n_cells)
        sol = solve_pde(gaussian_profile(g, 0.0, 0.8), p, K, g, dt, T,
                        output_times=np.array([0.0, T]))
        return g, sol.rho[-1]

    g1, r1 = run(160, 2e-3)       # h = 0.075
    g2, r2 = run(320, 5e-4)       # h = 0.0375
    g4, r4 = run(640, 1.25e-4)    # h = 0.01875
    # restrict finer solutions to the coarse nodes (they nest 1:2:4)
    e1 = np.max(np.abs(r1 - r4[::4]))
    e2 = np.max(np.abs(r2[::2] - r4[::4]))
    assert e1 / e2 >= 3.0


def test_mass_at_boundary_detected():
    g = GridSpec(-3.0, 3.0, 120)
    rho0 = gaussian_profile(g, 0.0, 1.0)
    rho0 /= np.trapezoid(rho0, dx=g.h)  # truncated tails renormalized
    p0 = ModelParams(lam=0.0, T=2.0)
    with pytest.raises(MassAtBoundary):
        solve_pde(rho0, p0, K, g, 5e-4, 2.0)


def test_pde_mass_helper():
    rho0 = gaussian_profile(GRID, 0.0, 1.0)
    sol = solve_pde(rho0, P, K, GRID, 5e-4, 0.1)
    assert pde_mass(sol, 0) == pytest.approx(sol.mass[0], abs=1e-15)
    assert pde_mass(sol, len(sol.times) - 1) == pytest.approx(sol.mass[-1],
                                                              abs=1e-15)


def test_output_times_respected():
    rho0 = gaussian_profile(GRID, 0.0, 1.0)
    ts = np.array([0.0, 0.05, 0.1])
    sol = solve_pde(rho0, P, K, GRID, 5e-4, 0.1, output_times=ts)
    assert np.array_equal(sol.times, ts)
    assert sol.rho.shape == (3, GRID.n_nodes)
    assert np.array_equal(sol.rho[0], rho0)
