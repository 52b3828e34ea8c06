"""TOML run configuration.

Sections and keys (all sections except ``[grid]`` optional)::

    [grid]      dim, sizes, extents
    [params]    d, epsilon, p_infinity, chi, alpha
    [init]      seed, amplitude, band_limit
    [schedule]  dt, t_end, stride, cfl_safety
    [sweep]     eps_ladder, comparison_times, norms, workers

Unknown sections or keys raise :class:`ConfigError`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import tomli

from .dynamics import ModelParams
from .errors import ConfigError
from .grid import Grid, make_grid
from .integrator import StepSchedule

SCHEMA: dict[str, dict[str, Any]] = {
    "grid": {"dim": None, "sizes": None, "extents": None},
    "params": {"d": 1.0, "epsilon": 0.0, "p_infinity": 1.0, "chi": 1.0, "alpha": 1.0},
    "init": {"seed": 0, "amplitude": 0.05, "band_limit": 8},
    "schedule": {"dt": 1e-3, "t_end": 1.0, "stride": 1, "cfl_safety": 1.0},
    "sweep": {
        "eps_ladder": [2e-2, 1e-2, 5e-3, 2.5e-3],
        "comparison_times": None,
        "norms": ["l2", "h1", "h2", "linf"],
        "workers": 1,
    },
}


@dataclass
class RunConfig:
    raw: dict
    grid: Grid
    params: ModelParams
    seed: int
    amplitude: float
    band_limit: int
    schedule: StepSchedule
    sweep: dict = field(default_factory=dict)


def _merge(raw: dict) -> dict:
    out = {}
    for section, value in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(value, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in value:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    if "grid" not in raw:
        raise ConfigError("missing [grid] section")
    for section, defaults in SCHEMA.items():
        merged = dict(defaults)
        merged.update(raw.get(section, {}))
        out[section] = merged
    return out


def parse_config(raw: dict) -> RunConfig:
    cfg = _merge(raw)
    gs = cfg["grid"]
    if gs["dim"] is None or gs["sizes"] is None:
        raise ConfigError("[grid] needs dim and sizes")
    dim = int(gs["dim"])
    sizes = gs["sizes"]
    if isinstance(sizes, int):
        sizes = [sizes] * dim
    extents = gs["extents"]
    if extents is None:
        extents = [2 * np.pi] * dim
    elif isinstance(extents, (int, float)):
        extents = [float(extents)] * dim
    gs.update(sizes=list(sizes), extents=[float(e) for e in extents])
    try:
        grid = make_grid(dim, sizes, extents)
        p = cfg["params"]
        params = ModelParams(
            D=float(p["d"]), epsilon=float(p["epsilon"]), p_infinity=float(p["p_infinity"]),
            chi=float(p["chi"]), alpha=float(p["alpha"]),
        )
        s = cfg["schedule"]
        schedule = StepSchedule(float(s["dt"]), float(s["t_end"]), int(s["stride"]), float(s["cfl_safety"]))
        init = cfg["init"]
        seed, amplitude, band = int(init["seed"]), float(init["amplitude"]), int(init["band_limit"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return RunConfig(cfg, grid, params, seed, amplitude, band, schedule, cfg["sweep"])


def load_config(path) -> RunConfig:
    try:
        raw = tomli.loads(Path(path).read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw)
