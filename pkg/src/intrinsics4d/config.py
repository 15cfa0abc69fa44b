"""Job configuration: one strict JSON document drives every command.

Unknown keys are rejected with their full path so typos cannot silently
fall back to defaults. Values may be overridden from the environment as
``I4D_<SECTION>_<KEY>`` (and ``I4D_SEED``); override values are parsed as
JSON when possible, else taken as strings. Relative paths are resolved
against the config file's directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

ENV_PREFIX = "I4D"

DEFAULTS: dict = {
    "seed": 7,
    "field": {
        "plane_res": 64,
        "d_low": 16,
        "keyframes": 8,
        "levels": 8,
        "table_log2": 16,
        "d_level": 2,
        "hash_base_res": 16,
        "hash_growth": 1.5,
        "mlp_hidden": 64,
        "mlp_layers": 2,
        "sphere_radius_frac": 0.35,
        "bounds_lo": [-1.0, -1.0, -1.0],
        "bounds_hi": [1.0, 1.0, 1.0],
    },
    "renderer": {
        "width": 64,
        "height": 64,
        "fov_y": 0.7,
        "samples_per_pixel": 16,
        "max_steps": 128,
        "hit_eps_frac": 1e-3,
        "normal_h_frac": 1e-3,
        "shadows": True,
        "background": "env",
        "silhouette_samples": 32,
        "silhouette_softness_frac": 0.004,
    },
    "template": {
        "source": "procedural_sphere",  # procedural_sphere | procedural_flower | file
        "mesh": None,  # OBJ path when source == "file"
        "sequence": None,  # fitted sequence container produced by `template fit`
        "flow_targets": None,  # FLW1 path for `template fit`
        "frames": 8,
        "patch_size": 8,
        "nsm_height": 16,
        "nsm_width": 16,
        "d_f": 3,
        "nsm_render_size": 128,
        "basis_views": 6,
        "basis_frames": 4,
        "fit_iterations": 120,
        "fit_step_size": 0.02,
        "lambda_arap": 0.05,
        "lambda_sil": 0.0,
    },
    "distill": {
        "iterations": 2000,
        "lr_grids": 1e-2,
        "lr_mlp": 1e-3,
        "tau_lo": 0.02,
        "tau_hi": 0.98,
        "weight": "one",
        "lambda_vid": 0.1,
        "vid_cadence": 10,
        "vid_frames": 8,
        "prompt": "",
        "elevation_min": 0.1,
        "elevation_max": 0.6,
        "radius": 1.9,
        "anchor_views": 8,
        "anchor_times": 4,
        "use_anchors": True,
        "refiner": "smooth",  # smooth | identity
        "provider_timeout": 10.0,
    },
    "io": {
        "out_dir": "out",
        "env_map": None,  # PFM path; None -> built-in gradient sky
        "checkpoint": None,  # field checkpoint to start from / render with
    },
}

_PATH_KEYS = {"mesh", "sequence", "flow_targets", "env_map", "checkpoint", "out_dir"}


class ConfigError(ValueError):
    pass


def _merge(defaults, user, path=""):
    if not isinstance(user, dict):
        raise ConfigError(f"section {path or '<root>'} must be a mapping")
    out = {}
    for key, dval in defaults.items():
        if key in user:
            uval = user[key]
            here = f"{path}.{key}" if path else key
            if isinstance(dval, dict):
                out[key] = _merge(dval, uval, here)
            else:
                out[key] = _coerce(dval, uval, here)
        else:
            out[key] = copy.deepcopy(dval)
    unknown = set(user) - set(defaults)
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown config key: {f'{path}.{k}' if path else k}")
    return out


def _coerce(default, value, path):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected bool, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{path}: expected integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected list, got {value!r}")
        return list(value)
    raise ConfigError(f"{path}: unsupported value {value!r}")


def _apply_env(data: dict) -> None:
    seed_var = os.environ.get(f"{ENV_PREFIX}_SEED")
    if seed_var is not None:
        data["seed"] = int(seed_var)
    for section, body in data.items():
        if not isinstance(body, dict):
            continue
        for key in body:
            var = f"{ENV_PREFIX}_{section.upper()}_{key.upper()}"
            if var in os.environ:
                raw = os.environ[var]
                try:
                    val = json.loads(raw)
                except json.JSONDecodeError:
                    val = raw
                body[key] = _coerce(DEFAULTS[section][key], val, f"{section}.{key}") if DEFAULTS[section][key] is not None else val


class JobConfig:
    def __init__(self, data: dict, base_dir: Path | None = None):
        self.data = _merge(DEFAULTS, data)
        _apply_env(self.data)
        self.base_dir = Path(base_dir) if base_dir else Path.cwd()
        self._resolve_paths()

    def _resolve_paths(self):
        for section, body in self.data.items():
            if not isinstance(body, dict):
                continue
            for key, val in body.items():
                if key in _PATH_KEYS and isinstance(val, str):
                    body[key] = str((self.base_dir / val).resolve())

    @classmethod
    def load(cls, path) -> "JobConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from e
        return cls(data, base_dir=path.parent)

    @classmethod
    def default(cls) -> "JobConfig":
        return cls({})

    def __getitem__(self, key):
        return self.data[key]

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.data, sort_keys=True).encode()).hexdigest()
