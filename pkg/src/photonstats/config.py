"""Run configuration files (YAML or JSON) for the simulator.

``pulse_area_pi`` is Θ/π and may be a number, a list, or a sweep mapping
``{start, stop, step}`` (stop inclusive). ``source`` switches from the
two-level emitter to a reference source (coherent, thermal, fock) whose
parameter is ``source_param``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ValidationError
from .sim import SOURCE_KINDS, DetectionConfig, EmitterConfig

DEFAULTS = {
    "pulse_area_pi": 1.0,
    "pulse_duration_ps": 15.0,
    "pulse_shape": "square",
    "lifetime_ps": 204.0,
    "repetition_period_ps": 12_500,
    "n_pulses": 100_000,
    "eta_t": 0.25,
    "n_detectors": 4,
    "splitting": None,
    "jitter_ps": 50.0,
    "background_cps": 0.0,
    "offset_ps": 140.0,
    "seed": 0,
    "source": "tls",
    "source_param": 1.0,
}

_FLOAT = ("pulse_duration_ps", "lifetime_ps", "eta_t", "jitter_ps", "background_cps",
          "offset_ps", "source_param")
_INT = ("repetition_period_ps", "n_pulses", "n_detectors", "seed")


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    thetas: tuple[float, ...]
    emitters: tuple[EmitterConfig, ...]
    detection: DetectionConfig

    @property
    def is_sweep(self) -> bool:
        return len(self.thetas) > 1

    @property
    def source(self) -> str:
        return self.raw["source"]


def _number(key, v, kind):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{key}: expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ValidationError(f"{key}: expected an integer, got {v!r}")
        return int(v)
    if not math.isfinite(v):
        raise ValidationError(f"{key}: must be finite")
    return float(v)


def _thetas(v) -> tuple[float, ...]:
    key = "pulse_area_pi"
    if isinstance(v, dict):
        missing = {"start", "stop", "step"} - v.keys()
        if missing or len(v) != 3:
            raise ValidationError(f"{key}: sweep needs exactly start, stop, step")
        a, b, s = (_number(key, v[k], float) for k in ("start", "stop", "step"))
        if s <= 0 or b < a:
            raise ValidationError(f"{key}: sweep needs step > 0 and stop >= start")
        n = int(math.floor((b - a) / s + 1e-9)) + 1
        vals = [round(a + i * s, 12) for i in range(n)]
    elif isinstance(v, (list, tuple)):
        if not v:
            raise ValidationError(f"{key}: empty list")
        vals = [_number(key, x, float) for x in v]
    else:
        vals = [_number(key, v, float)]
    if any(x < 0 for x in vals):
        raise ValidationError(f"{key}: must be non-negative")
    return tuple(vals)


def parse_config(data: dict | None, overrides: dict | None = None) -> RunConfig:
    data = dict(data or {})
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ValidationError(f"{unknown[0]}: unknown config key")
    cfg = {**DEFAULTS, **data, **(overrides or {})}
    for k in _FLOAT:
        cfg[k] = _number(k, cfg[k], float)
    for k in _INT:
        cfg[k] = _number(k, cfg[k], int)
    if not 0.0 <= cfg["eta_t"] <= 1.0:
        raise ValidationError(f"eta_t: must lie in [0, 1], got {cfg['eta_t']}")
    if cfg["n_pulses"] < 0:
        raise ValidationError("n_pulses: must be non-negative")
    if cfg["seed"] < 0:
        raise ValidationError("seed: must be non-negative")
    if cfg["source"] != "tls" and cfg["source"] not in SOURCE_KINDS:
        raise ValidationError(f"source: expected tls, coherent, thermal or fock, got {cfg['source']!r}")
    if cfg["splitting"] is not None:
        if not isinstance(cfg["splitting"], (list, tuple)):
            raise ValidationError("splitting: expected a list of fractions")
        cfg["splitting"] = [_number("splitting", x, float) for x in cfg["splitting"]]
    for k in ("pulse_duration_ps", "lifetime_ps", "repetition_period_ps"):
        if cfg[k] <= 0:
            raise ValidationError(f"{k}: must be positive")
    if cfg["pulse_duration_ps"] >= 0.1 * cfg["repetition_period_ps"]:
        raise ValidationError("pulse_duration_ps: must be below 10% of repetition_period_ps")
    if cfg["pulse_shape"] not in ("square", "gaussian"):
        raise ValidationError(f"pulse_shape: expected square or gaussian, got {cfg['pulse_shape']!r}")
    if not 1 <= cfg["n_detectors"] <= 4:
        raise ValidationError("n_detectors: must be 1..4")
    for k in ("jitter_ps", "background_cps", "offset_ps"):
        if cfg[k] < 0:
            raise ValidationError(f"{k}: must be non-negative")
    split = cfg["splitting"]
    if split is not None and (len(split) != cfg["n_detectors"] or min(split) < 0
                              or abs(sum(split) - 1.0) > 1e-12):
        raise ValidationError("splitting: needs n_detectors non-negative fractions summing to 1")
    thetas = _thetas(cfg["pulse_area_pi"])
    det = DetectionConfig(eta_t=cfg["eta_t"], n_detectors=cfg["n_detectors"],
                          splitting=None if split is None else tuple(split),
                          jitter_sigma=cfg["jitter_ps"], background_rate=cfg["background_cps"],
                          offset=cfg["offset_ps"])
    emitters = tuple(EmitterConfig(pulse_area=th * np.pi, pulse_duration=cfg["pulse_duration_ps"],
                                   pulse_shape=cfg["pulse_shape"], lifetime=cfg["lifetime_ps"],
                                   repetition_period=cfg["repetition_period_ps"],
                                   n_pulses=cfg["n_pulses"], seed=cfg["seed"])
                     for th in thetas)
    return RunConfig(cfg, thetas, emitters, det)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValidationError(f"config {path} is not valid: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ValidationError(f"config {path} must be a key-value mapping")
    return parse_config(data, overrides)
