"""Experiment configuration: JSON schema, validation, defaults.

Schema (all sections optional unless noted)::

    {
      "tracks": "path/to/tracks.csv",      # or "synth": {...}
      "synth": {"n_vehicles": 6, "n_pedestrians": 2, "n_frames": 40,
                "x_range": [-40, 40], "y_range": [-12, 12],
                "speed_range": [2, 9], "ped_speed_range": [0.5, 2.0],
                "turn_rate_range": [-0.3, 0.3]},
      "grid": {"resolution": 0.2, "width": 256, "height": 256},
      "sensor": {"n_rays": 360, "max_range": 25.0},
      "windows": {"obs_s": 3.0, "plan_s": 1.0, "dt": 0.1},
      "candidates": {"n": 64, "accel_range": [-4, 2], "yaw_rate_range": [-0.5, 0.5]},
      "policies": ["ego", "randTraj", "rand", "ego_all", "ego_concern",
                   "ego_concern_uncertainty", "ego_star"],
      "n_available": [3],
      "k_values": [1, 10],
      "seed": 0,
      "stride": null,                      # frames; default one full window
      "comm_count": 4,
      "augment": false,
      "forecaster": "oracle",              # or "persistence"
      "sdf_cap": 10.0,
      "topk_mode": "fraction",             # or "any"
      "max_scenarios": null
    }

Validation errors name the offending field path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    resolution: float = 0.2
    width: int = 256
    height: int = 256


@dataclass(frozen=True)
class WindowConfig:
    obs_s: float = 3.0
    plan_s: float = 1.0
    dt: float = 0.1


@dataclass(frozen=True)
class CandidateConfig:
    n: int = 64
    accel_range: tuple[float, float] = (-4.0, 2.0)
    yaw_rate_range: tuple[float, float] = (-0.5, 0.5)


@dataclass(frozen=True)
class SynthConfig:
    n_vehicles: int = 6
    n_pedestrians: int = 2
    n_frames: int = 40
    x_range: tuple[float, float] = (-40.0, 40.0)
    y_range: tuple[float, float] = (-12.0, 12.0)
    speed_range: tuple[float, float] = (2.0, 9.0)
    ped_speed_range: tuple[float, float] = (0.5, 2.0)
    turn_rate_range: tuple[float, float] = (-0.3, 0.3)
    heading_range: tuple[float, float] = (-3.141592653589793, 3.141592653589793)


VALID_POLICIES = ("ego", "randTraj", "rand", "ego_all", "ego_concern",
                  "ego_concern_uncertainty", "ego_star")
VALID_FORECASTERS = ("oracle", "persistence")
VALID_TOPK_MODES = ("fraction", "any")


@dataclass
class ExperimentConfig:
    tracks: str | None = None
    synth: SynthConfig | None = None
    grid: GridConfig = field(default_factory=GridConfig)
    sensor_n_rays: int = 360
    sensor_max_range: float = 25.0
    windows: WindowConfig = field(default_factory=WindowConfig)
    candidates: CandidateConfig = field(default_factory=CandidateConfig)
    policies: tuple[str, ...] = ("ego",)
    n_available: tuple[int, ...] = (3,)
    k_values: tuple[int, ...] = (1, 10)
    seed: int = 0
    stride: int | None = None
    comm_count: int = 4
    augment: bool = False
    forecaster: str = "oracle"
    sdf_cap: float = 10.0
    topk_mode: str = "fraction"
    max_scenarios: int | None = None


def _expect(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _number(raw, path: str, positive: bool = False) -> float:
    _expect(isinstance(raw, (int, float)) and not isinstance(raw, bool)
            and math.isfinite(raw), path, "expected a finite number")
    if positive:
        _expect(raw > 0, path, "must be positive")
    return float(raw)


def _integer(raw, path: str, minimum: int | None = None) -> int:
    _expect(isinstance(raw, int) and not isinstance(raw, bool), path, "expected an integer")
    if minimum is not None:
        _expect(raw >= minimum, path, f"must be >= {minimum}")
    return int(raw)


def _pair(raw, path: str) -> tuple[float, float]:
    _expect(isinstance(raw, (list, tuple)) and len(raw) == 2, path, "expected [low, high]")
    lo = _number(raw[0], f"{path}[0]")
    hi = _number(raw[1], f"{path}[1]")
    _expect(lo <= hi, path, "low must be <= high")
    return (lo, hi)


def parse_config(raw: dict) -> ExperimentConfig:
    _expect(isinstance(raw, dict), "<root>", "expected a JSON object")
    known = {
        "tracks", "synth", "grid", "sensor", "windows", "candidates", "policies",
        "n_available", "k_values", "seed", "stride", "comm_count", "augment",
        "forecaster", "sdf_cap", "topk_mode", "max_scenarios",
    }
    for key in raw:
        _expect(key in known, key, "unknown field")

    cfg = ExperimentConfig()

    if "tracks" in raw and raw["tracks"] is not None:
        _expect(isinstance(raw["tracks"], str), "tracks", "expected a path string")
        cfg.tracks = raw["tracks"]
    if "synth" in raw and raw["synth"] is not None:
        s = raw["synth"]
        _expect(isinstance(s, dict), "synth", "expected an object")
        defaults = SynthConfig()
        cfg.synth = SynthConfig(
            n_vehicles=_integer(s.get("n_vehicles", defaults.n_vehicles), "synth.n_vehicles", 0),
            n_pedestrians=_integer(s.get("n_pedestrians", defaults.n_pedestrians),
                                   "synth.n_pedestrians", 0),
            n_frames=_integer(s.get("n_frames", defaults.n_frames), "synth.n_frames", 1),
            x_range=_pair(s.get("x_range", defaults.x_range), "synth.x_range"),
            y_range=_pair(s.get("y_range", defaults.y_range), "synth.y_range"),
            speed_range=_pair(s.get("speed_range", defaults.speed_range), "synth.speed_range"),
            ped_speed_range=_pair(s.get("ped_speed_range", defaults.ped_speed_range),
                                  "synth.ped_speed_range"),
            turn_rate_range=_pair(s.get("turn_rate_range", defaults.turn_rate_range),
                                  "synth.turn_rate_range"),
            heading_range=_pair(s.get("heading_range", defaults.heading_range),
                                "synth.heading_range"),
        )
    _expect(cfg.tracks is None or cfg.synth is None, "tracks",
            "give either tracks or synth, not both")

    if "grid" in raw:
        g = raw["grid"]
        _expect(isinstance(g, dict), "grid", "expected an object")
        cfg.grid = GridConfig(
            resolution=_number(g.get("resolution", 0.2), "grid.resolution", positive=True),
            width=_integer(g.get("width", 256), "grid.width", 1),
            height=_integer(g.get("height", 256), "grid.height", 1),
        )
    if "sensor" in raw:
        s = raw["sensor"]
        _expect(isinstance(s, dict), "sensor", "expected an object")
        cfg.sensor_n_rays = _integer(s.get("n_rays", 360), "sensor.n_rays", 1)
        cfg.sensor_max_range = _number(s.get("max_range", 25.0), "sensor.max_range",
                                       positive=True)
    if "windows" in raw:
        w = raw["windows"]
        _expect(isinstance(w, dict), "windows", "expected an object")
        cfg.windows = WindowConfig(
            obs_s=_number(w.get("obs_s", 3.0), "windows.obs_s", positive=True),
            plan_s=_number(w.get("plan_s", 1.0), "windows.plan_s", positive=True),
            dt=_number(w.get("dt", 0.1), "windows.dt", positive=True),
        )
    if "candidates" in raw:
        c = raw["candidates"]
        _expect(isinstance(c, dict), "candidates", "expected an object")
        n = _integer(c.get("n", 64), "candidates.n", 1)
        side = int(round(math.sqrt(n)))
        _expect(side * side == n, "candidates.n", "must be a perfect square (grid of controls)")
        cfg.candidates = CandidateConfig(
            n=n,
            accel_range=_pair(c.get("accel_range", (-4, 2)), "candidates.accel_range"),
            yaw_rate_range=_pair(c.get("yaw_rate_range", (-0.5, 0.5)),
                                 "candidates.yaw_rate_range"),
        )
    if "policies" in raw:
        p = raw["policies"]
        _expect(isinstance(p, list) and p, "policies", "expected a non-empty list")
        for i, name in enumerate(p):
            _expect(name in VALID_POLICIES, f"policies[{i}]",
                    f"unknown policy {name!r}; valid: {VALID_POLICIES}")
        cfg.policies = tuple(p)
    if "n_available" in raw:
        ns = raw["n_available"]
        _expect(isinstance(ns, list) and ns, "n_available", "expected a non-empty list")
        cfg.n_available = tuple(_integer(v, f"n_available[{i}]", 0) for i, v in enumerate(ns))
    if "k_values" in raw:
        ks = raw["k_values"]
        _expect(isinstance(ks, list) and ks, "k_values", "expected a non-empty list")
        cfg.k_values = tuple(_integer(v, f"k_values[{i}]", 1) for i, v in enumerate(ks))
    if "seed" in raw:
        cfg.seed = _integer(raw["seed"], "seed")
    if "stride" in raw and raw["stride"] is not None:
        cfg.stride = _integer(raw["stride"], "stride", 1)
    if "comm_count" in raw:
        cfg.comm_count = _integer(raw["comm_count"], "comm_count", 1)
    if "augment" in raw:
        _expect(isinstance(raw["augment"], bool), "augment", "expected true/false")
        cfg.augment = raw["augment"]
    if "forecaster" in raw:
        _expect(raw["forecaster"] in VALID_FORECASTERS, "forecaster",
                f"valid: {VALID_FORECASTERS}")
        cfg.forecaster = raw["forecaster"]
    if "sdf_cap" in raw:
        cfg.sdf_cap = _number(raw["sdf_cap"], "sdf_cap", positive=True)
    if "topk_mode" in raw:
        _expect(raw["topk_mode"] in VALID_TOPK_MODES, "topk_mode",
                f"valid: {VALID_TOPK_MODES}")
        cfg.topk_mode = raw["topk_mode"]
    if "max_scenarios" in raw and raw["max_scenarios"] is not None:
        cfg.max_scenarios = _integer(raw["max_scenarios"], "max_scenarios", 1)

    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"invalid JSON in {path}: {err}") from err
    return parse_config(raw)
