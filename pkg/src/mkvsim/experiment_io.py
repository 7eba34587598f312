"""Config parsing, run manifests, CSV emission.

Config grammar: one `section.key = value` per line, `#` comments and
blank lines ignored, booleans `true`/`false`, paths quoted. Floats are
serialized with shortest round-trip formatting so emitted files re-parse
to identical values.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .coefficients import ModelParams, validate_params
from .errors import ParseError, ValidationError
from .history_field import GridSpec
from .kernel import KernelSpec, kernel_constants
from .particles import (ExplicitInit, GaussianInit, Mode, PointMassInit,
                        SimConfig)
from .pde import check_cfl

_DEFAULTS = {
    "model.lambda": 1.0,
    "model.c0": 1.0,
    "model.phi0": 1.0,
    "model.phi1": 0.5,
    "model.T": 1.0,
    "kernel.sigma": 0.5,
    "sim.N": 10_000,
    "sim.dt": 1e-3,
    "sim.mode": "hard",
    "sim.seed": 1,
    "sim.init": "gaussian",
    "sim.init_mean": 0.0,
    "sim.init_std": 1.0,
    "sim.init_x0": 0.0,
    "sim.init_values": "",
    "sim.oracle_enabled": False,
    "grid.x_min": -8.0,
    "grid.x_max": 8.0,
    "grid.n_cells": 800,
    "pde.enabled": True,
    "pde.dt": 1e-4,
    "outputs.directory": "out",
    "outputs.snapshot_stride": 10,
    "overrides.constant_rate": None,
    "overrides.zero_drift": False,
}

# sections that may appear in emitted manifests and are skipped on re-parse
_MANIFEST_SECTIONS = ("manifest", "derived")


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams
    kernel: KernelSpec
    sim: SimConfig
    pde_enabled: bool
    pde_dt: float
    out_dir: str
    snapshot_stride: int
    constant_rate: Optional[float]
    zero_drift: bool


def _parse_value(key: str, raw: str, lineno: int):
    default = _DEFAULTS[key]
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if isinstance(default, bool):
        if raw == "true":
            return True
        if raw == "false":
            return False
        raise ParseError(f"line {lineno}: {key} expects true/false, got {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(raw)
        except ValueError:
            raise ParseError(f"line {lineno}: {key} expects an integer") from None
    if isinstance(default, float) or default is None:
        try:
            return float(raw)
        except ValueError:
            raise ParseError(f"line {lineno}: {key} expects a number") from None
    return raw


def parse_config(text: str) -> RunConfig:
    """Parse and fully resolve a config document, applying defaults and
    running every cross-field validation."""
    values = dict(_DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError(f"line {lineno}: expected 'section.key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if "." in key and key.split(".", 1)[0] in _MANIFEST_SECTIONS:
            continue
        if key not in _DEFAULTS:
            raise ParseError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, lineno)
    return resolve_config(values)


def resolve_config(values: dict) -> RunConfig:
    try:
        model = ModelParams(lam=values["model.lambda"], c0=values["model.c0"],
                            phi0=values["model.phi0"], phi1=values["model.phi1"],
                            T=values["model.T"])
        kernel = KernelSpec(sigma=values["kernel.sigma"])
        grid = GridSpec(values["grid.x_min"], values["grid.x_max"],
                        values["grid.n_cells"])
    except ValueError as exc:
        raise ValidationError(str(exc)) from None

    init_kind = values["sim.init"]
    if init_kind == "gaussian":
        init = GaussianInit(values["sim.init_mean"], values["sim.init_std"])
        mean, std = init.mean, init.std
    elif init_kind == "point":
        init = PointMassInit(values["sim.init_x0"])
        mean, std = init.x0, 0.0
    elif init_kind == "explicit":
        try:
            vals = tuple(float(v) for v in values["sim.init_values"].split(","))
        except ValueError:
            raise ValidationError("sim.init_values must be a comma-separated "
                                  "list of numbers") from None
        init = ExplicitInit(vals)
        mean = sum(vals) / len(vals)
        std = max(abs(v - mean) for v in vals)
    else:
        raise ValidationError(
            f"sim.init must be gaussian/point/explicit, got {init_kind!r}")

    mode_raw = values["sim.mode"]
    if mode_raw not in ("hard", "soft"):
        raise ValidationError(f"sim.mode must be hard or soft, got {mode_raw!r}")

    sim = SimConfig(N=values["sim.N"], dt=values["sim.dt"], T=model.T,
                    mode=Mode(mode_raw), seed=values["sim.seed"], init=init,
                    grid=grid, oracle_enabled=values["sim.oracle_enabled"],
                    snapshot_stride=values["outputs.snapshot_stride"])

    bounds = validate_params(model, kernel)  # NonpositiveDenominator on failure

    # the hard runtime guard is PositionOutOfGrid; this is a coarse
    # pre-flight width check on the init law plus diffusive spread
    reach = 2.0 * (std + math.sqrt(2.0 * model.T)) + 5.0 * kernel.sigma
    if grid.x_min > mean - reach or grid.x_max < mean + reach:
        raise ValidationError(
            f"grid [{grid.x_min}, {grid.x_max}] too narrow for init law "
            f"(needs mean +/- {reach:.3g})")

    if values["pde.enabled"]:
        check_cfl(values["pde.dt"], grid.h, bounds.M_b)

    cr = values["overrides.constant_rate"]
    if cr is not None and cr <= 0.0:
        raise ValidationError("overrides.constant_rate must be positive")

    return RunConfig(model=model, kernel=kernel, sim=sim,
                     pde_enabled=values["pde.enabled"],
                     pde_dt=values["pde.dt"],
                     out_dir=values["outputs.directory"],
                     snapshot_stride=values["outputs.snapshot_stride"],
                     constant_rate=cr, zero_drift=values["overrides.zero_drift"])


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_to_text(cfg: RunConfig) -> str:
    """Serialize a resolved config back to the flat grammar."""
    init = cfg.sim.init
    if isinstance(init, GaussianInit):
        init_kind, init_fields = "gaussian", {
            "sim.init_mean": init.mean, "sim.init_std": init.std}
    elif isinstance(init, PointMassInit):
        init_kind, init_fields = "point", {"sim.init_x0": init.x0}
    else:
        init_kind, init_fields = "explicit", {
            "sim.init_values": '"' + ",".join(repr(v) for v in init.values) + '"'}
    pairs = {
        "model.lambda": cfg.model.lam,
        "model.c0": cfg.model.c0,
        "model.phi0": cfg.model.phi0,
        "model.phi1": cfg.model.phi1,
        "model.T": cfg.model.T,
        "kernel.sigma": cfg.kernel.sigma,
        "sim.N": cfg.sim.N,
        "sim.dt": cfg.sim.dt,
        "sim.mode": cfg.sim.mode.value,
        "sim.seed": cfg.sim.seed,
        "sim.init": init_kind,
        **init_fields,
        "sim.oracle_enabled": cfg.sim.oracle_enabled,
        "grid.x_min": cfg.sim.grid.x_min,
        "grid.x_max": cfg.sim.grid.x_max,
        "grid.n_cells": cfg.sim.grid.n_cells,
        "pde.enabled": cfg.pde_enabled,
        "pde.dt": cfg.pde_dt,
        "outputs.directory": f'"{cfg.out_dir}"',
        "outputs.snapshot_stride": cfg.snapshot_stride,
        "overrides.zero_drift": cfg.zero_drift,
    }
    if cfg.constant_rate is not None:
        pairs["overrides.constant_rate"] = cfg.constant_rate
    lines = [f"{k} = {v if isinstance(v, str) else _fmt(v)}"
             for k, v in pairs.items()]
    return "\n".join(lines) + "\n"


class RunManifest:
    """Resolved config plus derived constants and wall-clock bookkeeping.

    Written once before the run starts and finalized (rewritten with the
    end time) after it completes.
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        kc = kernel_constants(cfg.kernel)
        bounds = validate_params(cfg.model, cfg.kernel)
        self.derived = {
            "derived.M_K": kc.M_K,
            "derived.M_K1": kc.M_K1,
            "derived.M_K2": kc.M_K2,
            "derived.L_K": kc.L_K,
            "derived.L_K1": kc.L_K1,
            "derived.m": bounds.m,
            "derived.M": bounds.M,
            "derived.M_b": bounds.M_b,
        }
        self.wall_clock_start: Optional[str] = None
        self.wall_clock_end: Optional[str] = None

    def _text(self) -> str:
        lines = [f'manifest.code_version = "{__version__}"']
        if self.wall_clock_start is not None:
            lines.append(f'manifest.wall_clock_start = "{self.wall_clock_start}"')
        if self.wall_clock_end is not None:
            lines.append(f'manifest.wall_clock_end = "{self.wall_clock_end}"')
        lines += [f"{k} = {repr(v)}" for k, v in self.derived.items()]
        return "\n".join(lines) + "\n" + config_to_text(self.cfg)

    def write_start(self, path) -> None:
        self.wall_clock_start = _now()
        Path(path).write_text(self._text(), encoding="utf-8", newline="\n")

    def write_end(self, path) -> None:
        self.wall_clock_end = _now()
        Path(path).write_text(self._text(), encoding="utf-8", newline="\n")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()) + "Z"


def format_csv_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def emit_csv(path, header, rows) -> None:
    """UTF-8, LF endings, shortest-roundtrip float text; byte-identical
    across runs with identical inputs."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(format_csv_value(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc
