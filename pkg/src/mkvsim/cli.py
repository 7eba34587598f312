"""Batch command-line entry point.

Commands: simulate (particle run), solve (PDE run), compare (both plus
report), validate (config check only), constants (print derived
constants). Exit codes: 0 success, 1 validation/usage error, 2 runtime
error (out-of-grid, CFL, IO).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .coefficients import validate_params
from .errors import (CFLViolation, MassAtBoundary, MkvError, ParseError,
                     PositionOutOfGrid, ValidationError)
from .experiment_io import RunConfig, RunManifest, emit_csv, parse_config
from .kernel import kernel_constants
from .metrics import (DEFAULT_TEST_FUNCTIONS, compare_runs,
                      weak_form_residual_particles)
from .particles import Mode, run
from .pde import gaussian_profile, solve_pde
from .particles import GaussianInit


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mkvsim",
        description="killed mean-field particle system / nonlocal PDE toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "solve", "compare", "validate", "constants"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=str, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--mode", choices=("hard", "soft"), default=None)
        sp.add_argument("--quiet", action="store_true")
    return parser


def _load_config(args) -> RunConfig:
    if args.config is None:
        if args.command == "validate":
            text = sys.stdin.read()
        else:
            raise ValidationError("--config is required for this command")
    else:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
    cfg = parse_config(text)
    if args.seed is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if args.mode is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, mode=Mode(args.mode)))
    return cfg


def _derived_seed(seed: int, purpose: int) -> int:
    return int(np.random.SeedSequence(
        entropy=seed, spawn_key=(100, purpose)).generate_state(1)[0])


def _emit_mass_csv(path, out) -> None:
    col = "mass_hard" if out.mode is Mode.HARD_KILL else "mass_soft"
    emit_csv(path, ["t", col], zip(out.times, out.mass))


def _emit_snapshot_csv(path, out) -> None:
    def rows():
        for snap in out.snapshots:
            for i in range(out.N):
                yield (snap.t, i, snap.x[i], bool(snap.alive[i]),
                       snap.Lambda[i], np.exp(-snap.Lambda[i]))
    emit_csv(path, ["t", "particle_id", "x", "alive", "lambda", "weight"],
             rows())


def _report_times(cfg: RunConfig) -> np.ndarray:
    """11 evenly spaced times aligned with the particle snapshot stride
    and the PDE time step."""
    n_steps = cfg.sim.n_steps
    stride = cfg.sim.snapshot_stride
    steps = np.unique(np.rint(
        np.linspace(0, n_steps, 11) / stride).astype(int) * stride)
    steps = np.clip(steps, 0, n_steps)
    times = steps * cfg.sim.dt
    ratio = times / cfg.pde_dt
    if np.any(np.abs(ratio - np.rint(ratio)) > 1e-9):
        raise ValidationError("report times are not multiples of pde.dt; "
                              "adjust pde.dt or outputs.snapshot_stride")
    return times


def _run_pde(cfg: RunConfig, output_times) -> object:
    if not isinstance(cfg.sim.init, GaussianInit):
        raise ValidationError("the PDE solver requires sim.init = gaussian")
    rho0 = gaussian_profile(cfg.sim.grid, cfg.sim.init.mean, cfg.sim.init.std)
    return solve_pde(rho0, cfg.model, cfg.kernel, cfg.sim.grid, cfg.pde_dt,
                     cfg.model.T, constant_rate=cfg.constant_rate,
                     zero_drift=cfg.zero_drift, output_times=output_times)


def cmd_constants(cfg: RunConfig, quiet: bool) -> int:
    kc = kernel_constants(cfg.kernel)
    bounds = validate_params(cfg.model, cfg.kernel)
    for name, value in (("M_K", kc.M_K), ("M_K1", kc.M_K1), ("M_K2", kc.M_K2),
                        ("L_K", kc.L_K), ("L_K1", kc.L_K1),
                        ("m", bounds.m), ("M", bounds.M), ("M_b", bounds.M_b)):
        print(f"{name} = {value!r}")
    return 0


def cmd_validate(cfg: RunConfig, quiet: bool) -> int:
    if not quiet:
        print("config ok")
    return 0


def cmd_simulate(cfg: RunConfig, quiet: bool) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg)
    manifest.write_start(out_dir / "manifest.txt")
    out = run(cfg.sim, cfg.model, cfg.kernel,
              constant_rate=cfg.constant_rate, zero_drift=cfg.zero_drift)
    _emit_mass_csv(out_dir / "mass.csv", out)
    _emit_snapshot_csv(out_dir / "snapshots.csv", out)
    manifest.write_end(out_dir / "manifest.txt")
    if not quiet:
        print(f"final mass estimate: {out.mass[-1]!r}")
    return 0


def cmd_solve(cfg: RunConfig, quiet: bool) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg)
    manifest.write_start(out_dir / "manifest.txt")
    sol = _run_pde(cfg, np.linspace(0.0, cfg.model.T, 11))
    xs = cfg.sim.grid.nodes
    emit_csv(out_dir / "density.csv", ["t", "x", "rho"],
             ((t, x, r) for j, t in enumerate(sol.times)
              for x, r in zip(xs, sol.rho[j])))
    emit_csv(out_dir / "mass_pde.csv", ["t", "mass_pde"],
             zip(sol.step_times, sol.mass))
    manifest.write_end(out_dir / "manifest.txt")
    if not quiet:
        print(f"final PDE mass: {sol.mass[-1]!r}")
    return 0


def cmd_compare(cfg: RunConfig, quiet: bool) -> int:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg)
    manifest.write_start(out_dir / "manifest.txt")

    times = _report_times(cfg)
    sol = _run_pde(cfg, times)

    hard_cfg = replace(cfg.sim, mode=Mode.HARD_KILL,
                       seed=_derived_seed(cfg.sim.seed, 1))
    soft_cfg = replace(cfg.sim, mode=Mode.SOFT_WEIGHT,
                       seed=_derived_seed(cfg.sim.seed, 2))
    hard = run(hard_cfg, cfg.model, cfg.kernel,
               constant_rate=cfg.constant_rate, zero_drift=cfg.zero_drift)
    soft = run(soft_cfg, cfg.model, cfg.kernel,
               constant_rate=cfg.constant_rate, zero_drift=cfg.zero_drift)

    report = compare_runs(soft, sol, cfg.kernel, cfg.sim.grid)
    hard_mass_at = np.interp(times, hard.times, hard.mass)
    residuals = []
    for tf in DEFAULT_TEST_FUNCTIONS:
        residuals.append([weak_form_residual_particles(
            tf, soft, cfg.model, t=float(t),
            constant_rate=cfg.constant_rate, zero_drift=cfg.zero_drift)
            for t in times])

    _emit_mass_csv(out_dir / "mass_hard.csv", hard)
    _emit_mass_csv(out_dir / "mass_soft.csv", soft)
    emit_csv(out_dir / "mass_pde.csv", ["t", "mass_pde"],
             zip(sol.step_times, sol.mass))
    emit_csv(out_dir / "report.csv",
             ["t", "l1_gap", "mass_hard", "mass_soft", "mass_pde", "w1",
              "residual_f1", "residual_f2"],
             ((times[j], report.l1_density_gap[j], hard_mass_at[j],
               report.particle_mass[j], report.pde_mass[j], report.w1[j],
               residuals[0][j], residuals[1][j])
              for j in range(len(times))))
    manifest.write_end(out_dir / "manifest.txt")

    if not quiet:
        print(f"{'t':>8} {'mass_hard':>12} {'mass_soft':>12} "
              f"{'mass_pde':>12} {'l1_gap':>12}")
        for j, t in enumerate(times):
            print(f"{t:8.3f} {hard_mass_at[j]:12.6f} "
                  f"{report.particle_mass[j]:12.6f} "
                  f"{report.pde_mass[j]:12.6f} "
                  f"{report.l1_density_gap[j]:12.6f}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "compare": cmd_compare,
    "validate": cmd_validate,
    "constants": cmd_constants,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = _load_config(args)
        return _COMMANDS[args.command](cfg, args.quiet)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PositionOutOfGrid, CFLViolation, MassAtBoundary, MkvError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
