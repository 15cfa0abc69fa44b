"""Parameter container and initialization for the hybrid 4D field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tape import DTYPE, GradientNaNError
from .config import FieldConfig


@dataclass
class Field4DParams:
    """All arrays defining one field instance.

    ``planes`` holds the six low-frequency feature planes, ``hash_tables``
    the per-keyframe multiresolution tables, and the two weight/bias lists
    the geometry and material heads. ``keyframe_times`` is strictly
    increasing with endpoints 0 and 1.
    """

    config: FieldConfig
    planes: np.ndarray  # (6, R, R, d_low)
    hash_tables: np.ndarray  # (K, L, table_size, d_level)
    sdf_weights: list
    sdf_biases: list
    mat_weights: list
    mat_biases: list
    keyframe_times: np.ndarray  # (K,)

    @property
    def bounds_lo(self) -> np.ndarray:
        return np.asarray(self.config.bounds_lo, dtype=DTYPE)

    @property
    def bounds_hi(self) -> np.ndarray:
        return np.asarray(self.config.bounds_hi, dtype=DTYPE)

    @property
    def center(self) -> np.ndarray:
        return (self.bounds_lo + self.bounds_hi) / 2.0

    @property
    def sphere_radius(self) -> float:
        return self.config.sphere_radius()

    def copy(self) -> "Field4DParams":
        return Field4DParams(
            config=self.config,
            planes=self.planes.copy(),
            hash_tables=self.hash_tables.copy(),
            sdf_weights=[w.copy() for w in self.sdf_weights],
            sdf_biases=[b.copy() for b in self.sdf_biases],
            mat_weights=[w.copy() for w in self.mat_weights],
            mat_biases=[b.copy() for b in self.mat_biases],
            keyframe_times=self.keyframe_times.copy(),
        )


def leaves(params: Field4DParams) -> dict[str, np.ndarray]:
    """Named view of every learnable array."""
    out = {"planes": params.planes, "hash": params.hash_tables}
    for i, (w, b) in enumerate(zip(params.sdf_weights, params.sdf_biases)):
        out[f"sdf.W{i}"] = w
        out[f"sdf.b{i}"] = b
    for i, (w, b) in enumerate(zip(params.mat_weights, params.mat_biases)):
        out[f"mat.W{i}"] = w
        out[f"mat.b{i}"] = b
    return out


def set_leaves(params: Field4DParams, values: dict[str, np.ndarray]) -> None:
    """Write updated arrays back (shapes must match)."""
    for name, arr in values.items():
        dst = leaves(params)[name]
        if dst.shape != arr.shape:
            raise ValueError(f"shape mismatch for {name}: {dst.shape} vs {arr.shape}")
        dst[...] = arr


def assert_finite(params: Field4DParams) -> None:
    """Raise naming the first array holding a NaN or Inf."""
    for name, arr in leaves(params).items():
        if not np.all(np.isfinite(arr)):
            raise GradientNaNError(f"parameter array {name!r} contains non-finite values")


def _mlp_init(rng, d_in: int, hidden: int, layers: int, d_out: int, out_scale: float):
    """Xavier-ish init for hidden layers; tiny final layer so the head starts
    as a small correction on top of its analytic skip term."""
    ws, bs = [], []
    fan = d_in
    for _ in range(layers):
        ws.append(rng.normal(0.0, np.sqrt(1.0 / fan), size=(fan, hidden)).astype(DTYPE))
        bs.append(np.zeros(hidden, dtype=DTYPE))
        fan = hidden
    ws.append(rng.normal(0.0, out_scale, size=(fan, d_out)).astype(DTYPE))
    bs.append(np.zeros(d_out, dtype=DTYPE))
    return ws, bs


def init_params(config: FieldConfig, seed: int) -> Field4DParams:
    """Deterministically initialize a field.

    Planes start as small uniform noise around 1 so the Hadamard product is
    near-constant; hash tables start near 0; the geometry head starts as a
    sphere of the configured radius via its |x|-r0 skip term plus a tiny
    MLP correction.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    c = config
    planes = (
        1.0 + c.plane_init_noise * (2.0 * rng.random((6, c.plane_res, c.plane_res, c.d_low)) - 1.0)
    ).astype(DTYPE)
    hash_tables = (
        c.hash_init_noise * (2.0 * rng.random((c.keyframes, c.levels, c.table_size, c.d_level)) - 1.0)
    ).astype(DTYPE)
    sdf_w, sdf_b = _mlp_init(rng, c.d_feature + 3, c.mlp_hidden, c.mlp_layers, 1, 3e-3)
    mat_w, mat_b = _mlp_init(rng, c.d_feature, c.mlp_hidden, c.mlp_layers, 6, 1e-2)
    keyframe_times = np.linspace(0.0, 1.0, c.keyframes, dtype=DTYPE)
    return Field4DParams(
        config=c,
        planes=planes,
        hash_tables=hash_tables,
        sdf_weights=sdf_w,
        sdf_biases=sdf_b,
        mat_weights=mat_w,
        mat_biases=mat_b,
        keyframe_times=keyframe_times,
    )
