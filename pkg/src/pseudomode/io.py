"""File formats: run configuration, exponential-series files and JSON reports."""
from __future__ import annotations

import copy
import json
import platform
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
import yaml

from .correlation import ExponentialSeries, PoleTerm, SpectralDensityModel
from .dynamics import SystemSpec
from .exceptions import InputError

__all__ = [
    "DEFAULT_CONFIG",
    "load_config",
    "merge_config",
    "apply_overrides",
    "validate_config",
    "sd_from_config",
    "system_from_config",
    "times_from_config",
    "initial_state_from_config",
    "save_series",
    "load_series",
    "write_json",
    "environment_info",
]

SERIES_FORMAT = "exponential-series"
SERIES_VERSION = 1

# Defaults: strong coupling, narrow bath, omega0 = 0.5; every key may be overridden.
DEFAULT_CONFIG: dict = {
    "bath": {"alpha": 0.25, "omega0": 0.5, "gamma_width": 0.05, "beta": 1.0},
    "system": {"epsilon": 0.5, "delta_x": 1.0},
    "pipeline": {
        "mode": "full_fit",
        "k_fit": 2,
        "n_matsubara": 1500,
        "fit": {"t_max": 10.0, "n_points": 500, "log_grid": True, "n_starts": 8, "random_state": 0},
    },
    "pseudomodes": {
        "resonant_dim": 18,
        "aux_dim": 2,
        "sweep": {"start": 8, "stop": 24, "step": 2, "threshold": 5e-3},
    },
    "time": {"t_max": 25.0, "n_points": 400},
    "initial_state": "excited",
    "solver": {"rtol": 1e-10, "atol": None, "method": "auto", "top_threshold": 1e-3},
    "heom": {"depth": 40, "n_matsubara": 2, "matsubara_depth": 2, "use_terminator": True,
             "depth_check": False, "depth_tol": 1e-4},
    "output": {"directory": "out"},
}


def merge_config(base: Mapping, update: Mapping) -> dict:
    """Recursive dict merge; ``update`` wins."""
    out = copy.deepcopy(dict(base))
    for key, val in update.items():
        if isinstance(val, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = merge_config(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: Optional[str] = None) -> dict:
    """Defaults merged with an optional YAML (or JSON) file."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise InputError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, Mapping):
        raise InputError(f"config {path} must be a mapping at top level")
    unknown = set(data) - set(DEFAULT_CONFIG)
    if unknown:
        raise InputError(f"unknown config sections: {sorted(unknown)}")
    return merge_config(cfg, data)


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise InputError(f"override {item!r} must look like section.key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = cfg
        for k in keys[:-1]:
            if not isinstance(node.get(k), dict):
                raise InputError(f"unknown config key {path!r}")
            node = node[k]
        if keys[-1] not in node:
            raise InputError(f"unknown config key {path!r}")
        node[keys[-1]] = yaml.safe_load(raw)
    return cfg


def _positive(name, value, allow_zero=False):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise InputError(f"{name} must be a number, got {value!r}") from None
    if not np.isfinite(v) or v < 0 or (v == 0 and not allow_zero):
        raise InputError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")
    return v


def validate_config(cfg: Mapping) -> dict:
    b = cfg["bath"]
    _positive("bath.alpha", b["alpha"], allow_zero=True)
    for key in ("omega0", "gamma_width", "beta"):
        _positive(f"bath.{key}", b[key])
    for key in ("epsilon", "delta_x"):
        float(cfg["system"][key])
    p = cfg["pipeline"]
    if p["mode"] not in ("full_fit", "terminator"):
        raise InputError(f"pipeline.mode must be full_fit or terminator, got {p['mode']!r}")
    if int(p["k_fit"]) < 1 or int(p["n_matsubara"]) < 2:
        raise InputError("pipeline.k_fit must be >= 1 and pipeline.n_matsubara >= 2")
    pm = cfg["pseudomodes"]
    if pm["resonant_dim"] != "auto" and int(pm["resonant_dim"]) < 2:
        raise InputError("pseudomodes.resonant_dim must be >= 2 or 'auto'")
    if pm["aux_dim"] is not None and int(pm["aux_dim"]) < 2:
        raise InputError("pseudomodes.aux_dim must be >= 2")
    _positive("time.t_max", cfg["time"]["t_max"])
    if int(cfg["time"]["n_points"]) < 2:
        raise InputError("time.n_points must be >= 2")
    _positive("solver.rtol", cfg["solver"]["rtol"])
    if int(cfg["heom"]["depth"]) < 1:
        raise InputError("heom.depth must be >= 1")
    return dict(cfg)


def sd_from_config(cfg: Mapping) -> SpectralDensityModel:
    b = cfg["bath"]
    return SpectralDensityModel(float(b["alpha"]), float(b["omega0"]), float(b["gamma_width"]), float(b["beta"]))


def system_from_config(cfg: Mapping) -> SystemSpec:
    return SystemSpec(float(cfg["system"]["epsilon"]), float(cfg["system"]["delta_x"]))


def times_from_config(cfg: Mapping) -> np.ndarray:
    return np.linspace(0.0, float(cfg["time"]["t_max"]), int(cfg["time"]["n_points"]))


_NAMED_STATES = {
    "excited": np.array([[1, 0], [0, 0]], dtype=complex),
    "ground": np.array([[0, 0], [0, 1]], dtype=complex),
    "plus": 0.5 * np.ones((2, 2), dtype=complex),
}


def initial_state_from_config(cfg: Mapping) -> np.ndarray:
    spec = cfg.get("initial_state", "excited")
    if isinstance(spec, str):
        if spec not in _NAMED_STATES:
            raise InputError(f"initial_state must be one of {sorted(_NAMED_STATES)} or a 2x2 matrix")
        return _NAMED_STATES[spec].copy()
    rho = np.asarray(spec, dtype=complex)
    if rho.shape != (2, 2):
        raise InputError("initial_state matrix must be 2x2")
    if not np.isclose(np.trace(rho), 1.0):
        raise InputError("initial_state must have unit trace")
    return rho


def save_series(series: ExponentialSeries, path, metadata: Optional[dict] = None) -> None:
    """Write ``C(tau) = sum a exp(-i z tau)`` as JSON with full float precision."""
    doc = {
        "format": SERIES_FORMAT,
        "version": SERIES_VERSION,
        "terms": [{"a_re": t.amplitude.real, "a_im": t.amplitude.imag, "z_re": t.z.real, "z_im": t.z.imag}
                  for t in series],
        "metadata": metadata or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_series(path) -> ExponentialSeries:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read series file {path}: {exc}") from exc
    if doc.get("format") != SERIES_FORMAT:
        raise InputError(f"{path} is not an exponential-series file")
    try:
        return ExponentialSeries(PoleTerm(complex(t["a_re"], t["a_im"]), complex(t["z_re"], t["z_im"]))
                                 for t in doc["terms"])
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed series file {path}: {exc}") from exc


def _jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload: Mapping) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(dict(payload)), fh, indent=2, sort_keys=True)
        fh.write("\n")


def environment_info() -> dict:
    import scipy
    import sklearn

    from . import __version__

    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "pyyaml": yaml.__version__,
    }
