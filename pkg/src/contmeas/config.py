"""Experiment configuration: YAML documents validated against a fixed schema.

Schema (every key optional unless marked; unknown keys are rejected)::

    experiment: discrete | sde | master | converge | ensemble | record-scaling   (required)
    seed: int >= 0                       master seed (default 0)
    horizon: float > 0                   total time T (default 1.0)
    stride: int >= 1                     output every stride steps (default 1)
    trajectories: int >= 1               ensemble size M (default 1)
    chunk_size: int >= 1                 trajectories per work unit (default 64)
    grid:    {n_points: int >= 8, q_min: float, q_max: float}
    model:   {mass: float > 0, gamma: float >= 0}
    initial: {mean_q: float, mean_p: float, var_q: float > 0, cov_qp: float}
    discrete: {alpha: float >= 0, delta_t: float > 0, method: auto | grid | compound}
    sde:     {dt: float > 0, kind: nonlinear | linear | mixed, beta: float, level: psi | rho}
    master:  {dt: float > 0}
    converge: {delta_ts: [float > 0, ...], samples: int >= 2, tolerance: float > 0,
               quantity: str}
    record_scaling: {source: sde | discrete, windows: [float > 0, ...], refine: int >= 1,
                     min_records: int >= 2}
    output:  {dir: str, figures: bool}

For ``discrete`` runs ``alpha`` may be omitted and is then ``gamma * delta_t``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path

import yaml

from .errors import ConfigError

EXPERIMENTS = ("discrete", "sde", "master", "converge", "ensemble", "record-scaling")

_pos = ("positive", lambda v: v > 0)
_nonneg = ("non-negative", lambda v: v >= 0)


def _at_least(n):
    return (f">= {n}", lambda v: v >= n)


def _one_of(*choices):
    return (f"one of {', '.join(choices)}", lambda v: v in choices)


# section -> key -> (type, default, constraint or None)
SCHEMA = {
    "": {
        "experiment": (str, None, _one_of(*EXPERIMENTS)),
        "seed": (int, 0, _nonneg),
        "horizon": (float, 1.0, _pos),
        "stride": (int, 1, _at_least(1)),
        "trajectories": (int, 1, _at_least(1)),
        "chunk_size": (int, 64, _at_least(1)),
    },
    "grid": {
        "n_points": (int, 128, _at_least(8)),
        "q_min": (float, -12.0, None),
        "q_max": (float, 12.0, None),
    },
    "model": {
        "mass": (float, 1.0, _pos),
        "gamma": (float, 1.0, _nonneg),
    },
    "initial": {
        "mean_q": (float, 0.0, None),
        "mean_p": (float, 0.0, None),
        "var_q": (float, 0.5, _pos),
        "cov_qp": (float, 0.0, None),
    },
    "discrete": {
        "alpha": (float, None, _nonneg),
        "delta_t": (float, 0.01, _pos),
        "method": (str, "auto", _one_of("auto", "grid", "compound")),
    },
    "sde": {
        "dt": (float, 1e-3, _pos),
        "kind": (str, "nonlinear", _one_of("nonlinear", "linear", "mixed")),
        "beta": (float, None, None),
        "level": (str, "psi", _one_of("psi", "rho")),
    },
    "master": {
        "dt": (float, 5e-3, _pos),
    },
    "converge": {
        "delta_ts": (list, [1e-2, 1e-3, 1e-4], _pos),
        "samples": (int, 10000, _at_least(2)),
        "tolerance": (float, 0.05, _pos),
        "quantity": (str, "second_dQ", None),
    },
    "record_scaling": {
        "source": (str, "sde", _one_of("sde", "discrete")),
        "windows": (list, [0.01, 0.02, 0.05, 0.1], _pos),
        "refine": (int, 1, _at_least(1)),
        "min_records": (int, 100, _at_least(2)),
    },
    "output": {
        "dir": (str, "out", None),
        "figures": (bool, True, None),
    },
}

# keys that describe where results go, not what is computed
_NON_SEMANTIC = {"output"}


def _coerce(path, typ, value, check):
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
    elif typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(path, f"expected a finite number, got {value!r}")
    elif typ is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
    elif typ is list:
        if not isinstance(value, list) or not value:
            raise ConfigError(path, f"expected a non-empty list, got {value!r}")
        items = []
        for i, item in enumerate(value):
            items.append(_coerce(f"{path}[{i}]", float, item, check))
        return items
    if check is not None and not check[1](value):
        raise ConfigError(path, f"must be {check[0]}, got {value!r}")
    return value


def validate(raw: dict) -> dict:
    """Return a fully populated, validated copy of ``raw``; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    out = {}
    top = SCHEMA[""]
    for key in raw:
        if key not in top and key.replace("-", "_") not in SCHEMA:
            raise ConfigError(key, "unknown key")
    for key, (typ, default, check) in top.items():
        if key in raw:
            out[key] = _coerce(key, typ, raw[key], check)
        elif default is None:
            raise ConfigError(key, "required key missing")
        else:
            out[key] = default
    for section, fields in SCHEMA.items():
        if not section:
            continue
        given = raw.get(section, {}) or {}
        if not isinstance(given, dict):
            raise ConfigError(section, "expected a mapping")
        for key in given:
            if key not in fields:
                raise ConfigError(f"{section}.{key}", "unknown key")
        sec = {}
        for key, (typ, default, check) in fields.items():
            path = f"{section}.{key}"
            if key in given and given[key] is not None:
                sec[key] = _coerce(path, typ, given[key], check)
            else:
                sec[key] = copy.copy(default)
        out[section] = sec
    _cross_checks(out)
    return out


def _cross_checks(cfg):
    if not cfg["grid"]["q_max"] > cfg["grid"]["q_min"]:
        raise ConfigError("grid.q_max", "must exceed grid.q_min")
    if cfg["sde"]["kind"] == "mixed" and cfg["sde"]["beta"] is None:
        raise ConfigError("sde.beta", "required for the mixed kind")
    dts = cfg["converge"]["delta_ts"]
    if len(dts) < 2 or any(b >= a for a, b in zip(dts, dts[1:])):
        raise ConfigError("converge.delta_ts", "needs at least two strictly decreasing entries")
    exp = cfg["experiment"]
    if exp == "ensemble" and cfg["trajectories"] < 2:
        raise ConfigError("trajectories", "ensemble runs need at least 2 trajectories")
    if exp in ("converge", "record-scaling") and cfg["model"]["gamma"] == 0:
        raise ConfigError("model.gamma", f"must be positive for {exp} runs")
    disc = cfg["discrete"]
    if disc["alpha"] is None:
        disc["alpha"] = cfg["model"]["gamma"] * disc["delta_t"]


def load_config(path) -> dict:
    """Parse and validate a YAML config file."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from exc
    return validate(raw if raw is not None else {})


def config_hash(cfg: dict) -> str:
    """Short SHA-256 of the canonical JSON form of everything that affects results."""
    semantic = {k: v for k, v in cfg.items() if k not in _NON_SEMANTIC}
    blob = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
