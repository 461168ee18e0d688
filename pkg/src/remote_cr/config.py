"""Run configuration: YAML file, noise profiles, dot-path overrides and a stable hash.

Frequencies are given in GHz and drive amplitudes in MHz (both as
``f`` with ``omega = 2 pi f``); times are in ns.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .calibration import CnotPulseParams
from .device import CableMode, DeviceModel, cable_mode_frequencies

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "PROFILES", "load_config", "config_hash", "apply_override",
           "CONFIG_ENV"]

CONFIG_ENV = "REMOTE_CR_CONFIG"
TWO_PI = 2 * math.pi


class ConfigError(ValueError):
    """Schema violation; ``problems`` lists every offending key."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


DEFAULTS: dict = {
    "seed": None,
    "profile": "paper-like",
    "output_dir": "results",
    "device": {
        "control_freq_ghz": 4.80,
        "target_freq_ghz": 4.70,
        "control_anharm_ghz": -0.25,
        "target_anharm_ghz": -0.25,
        "levels": 3,
        "line_phase": [0.6, -0.4],
        "cable": {
            "length_m": 0.30,
            "phase_velocity_m_per_ns": 0.20,
            "first_mode": 13,
            "n_modes": 2,
            "g_control_ghz": 0.0125,
            "g_target_ghz": 0.0125,
            "mode_anharm_control": 0.01,
            "mode_anharm_target": 0.01,
        },
        "t1_ns": None,
        "t2_ns": None,
        "readout_error": [0.0, 0.0],
        "thermal": [0.0, 0.0],
    },
    "pulse": {
        "cr_amp_mhz": 40.0,
        "duration_ns": 170.0,
        "ramp_time_ns": 40.0,
        "drag": 0.0,
        "dt_ns": 0.5,
    },
    "experiment": {
        "shots": 2000,
        "readout_correction": True,
        "calibration": {
            "shots": None,
            "n_phases": 24,
            "flats_ns": [0.0, 400.0, 21],
            "repetitions": [1, 3, 5, 11],
        },
        "sweep": {
            "amplitudes_mhz": [0.0, 80.0, 11],
            "flats_ns": [0.0, 400.0, 21],
            "shots": None,
            "target_rate_mhz": 1.0,
        },
        "qpt": {"shots": 2000},
        "xeb": {
            "depths": [1, 3, 5, 7, 10, 15, 20, 30],
            "circuits": 20,
            "shots": 2000,
            "layer_time_ns": 40.0,
            "bootstrap_resamples": 10000,
        },
        "bell": {"shots": 2000},
        "chsh": {"thetas": [0.0, 6.283185307179586, 49], "shots": 2000},
    },
}

PROFILES: dict = {
    "ideal": {"device": {"t1_ns": None, "t2_ns": None, "readout_error": [0.0, 0.0], "thermal": [0.0, 0.0]}},
    "paper-like": {
        "device": {
            "t1_ns": [25000.0, 25000.0],
            "t2_ns": [25000.0, 25000.0],
            "readout_error": [0.02, 0.02],
            "thermal": [0.01, 0.01],
        }
    },
}


def _merge(base: dict, extra: dict, problems: list, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        key = f"{path}{k}"
        if k not in base:
            problems.append(f"{key}: unknown key")
        elif isinstance(base[k], dict):
            if not isinstance(v, dict):
                problems.append(f"{key}: expected a section")
            else:
                out[k] = _merge(base[k], v, problems, key + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(cfg: dict, item: str) -> None:
    """Apply ``a.b.c=value`` in place; the value is parsed as YAML."""
    if "=" not in item:
        raise ConfigError([f"{item}: override must look like key.path=value"])
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError([f"{key}: unknown key"])
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError([f"{key}: unknown key"])
    node[parts[-1]] = yaml.safe_load(raw)


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _grid(spec, name, problems):
    try:
        start, stop, num = spec
        return np.linspace(float(start), float(stop), int(num))
    except (TypeError, ValueError):
        problems.append(f"{name}: expected [start, stop, count]")
        return None


def _pair(v, name, problems, positive=False):
    try:
        a, b = (float(x) for x in v)
    except (TypeError, ValueError):
        problems.append(f"{name}: expected two numbers")
        return None
    if positive and (a <= 0 or b <= 0):
        problems.append(f"{name}: values must be positive")
    return (a, b)


@dataclass
class RunConfig:
    raw: dict
    seed: int
    output_dir: Path
    model: DeviceModel
    pulse: CnotPulseParams
    dt: float

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def experiment(self) -> dict:
        return self.raw["experiment"]

    def grid(self, *path) -> np.ndarray:
        node = self.raw["experiment"]
        for p in path:
            node = node[p]
        return np.linspace(float(node[0]), float(node[1]), int(node[2]))


def _build(cfg: dict) -> RunConfig:
    problems: list[str] = []
    seed = cfg.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append("seed: a non-negative integer seed is required")
    d = cfg["device"]
    cab = d["cable"]
    model = None
    try:
        freqs = cable_mode_frequencies(float(cab["length_m"]), float(cab["phase_velocity_m_per_ns"]),
                                       int(cab["n_modes"]), first=int(cab["first_mode"]))
        modes = tuple(
            CableMode(int(cab["first_mode"]) + i, f, TWO_PI * float(cab["g_control_ghz"]),
                      TWO_PI * float(cab["g_target_ghz"]), float(cab["mode_anharm_control"]),
                      float(cab["mode_anharm_target"]))
            for i, f in enumerate(freqs)
        )
    except (TypeError, ValueError) as exc:
        problems.append(f"device.cable: {exc}")
        modes = ()
    t1 = None if d["t1_ns"] is None else _pair(d["t1_ns"], "device.t1_ns", problems, True)
    t2 = None if d["t2_ns"] is None else _pair(d["t2_ns"], "device.t2_ns", problems, True)
    ro = _pair(d["readout_error"], "device.readout_error", problems)
    th = _pair(d["thermal"], "device.thermal", problems)
    lp = _pair(d["line_phase"], "device.line_phase", problems)
    for grid in (("calibration", "flats_ns"), ("sweep", "amplitudes_mhz"), ("sweep", "flats_ns"),
                 ("chsh", "thetas")):
        node = cfg["experiment"][grid[0]][grid[1]]
        _grid(node, "experiment." + ".".join(grid), problems)
    if not problems:
        try:
            model = DeviceModel(
                control_freq=TWO_PI * float(d["control_freq_ghz"]),
                target_freq=TWO_PI * float(d["target_freq_ghz"]),
                control_anharm=TWO_PI * float(d["control_anharm_ghz"]),
                target_anharm=TWO_PI * float(d["target_anharm_ghz"]),
                modes=modes, levels=int(d["levels"]), t1=t1, t2=t2,
                confusion=tuple(((1 - e, e), (e, 1 - e)) for e in ro), thermal=th, line_phase=lp,
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"device: {exc}")
    pulse = None
    p = cfg["pulse"]
    try:
        pulse = CnotPulseParams(cr_amp=TWO_PI * float(p["cr_amp_mhz"]) * 1e-3, duration=float(p["duration_ns"]),
                                ramp_time=float(p["ramp_time_ns"]), drag=float(p["drag"]))
        if not 0 < float(p["dt_ns"]) <= 2:
            problems.append("pulse.dt_ns: must lie in (0, 2]")
    except (TypeError, ValueError) as exc:
        problems.append(f"pulse: {exc}")
    if problems:
        raise ConfigError(problems)
    return RunConfig(cfg, seed, Path(cfg["output_dir"]), model, pulse, float(p["dt_ns"]))


def load_config(path=None, overrides=(), output_dir=None) -> RunConfig:
    """Read YAML from ``path`` (or ``$REMOTE_CR_CONFIG``), layer it over the profile and defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if path is None:
        raise ConfigError([f"no config file given and {CONFIG_ENV} is not set"])
    try:
        text = Path(path).read_text(encoding="utf-8")
        user = yaml.safe_load(text) or {}
    except OSError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    if not isinstance(user, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    problems: list[str] = []
    profile = user.get("profile", DEFAULTS["profile"])
    for item in overrides:
        if item.split("=", 1)[0].strip() == "profile":
            profile = yaml.safe_load(item.split("=", 1)[1])
    if profile not in PROFILES:
        raise ConfigError([f"profile: unknown profile {profile!r} (choose from {sorted(PROFILES)})"])
    base = _merge(DEFAULTS, PROFILES[profile], problems)
    cfg = _merge(base, user, problems)
    if problems:
        raise ConfigError(problems)
    for item in overrides:
        apply_override(cfg, item)
    if output_dir is not None:
        cfg["output_dir"] = str(output_dir)
    return _build(cfg)
