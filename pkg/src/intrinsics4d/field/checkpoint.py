"""Tensor container and field checkpoints.

Layout: magic ``I4D1``, u32 array count, then per array a manifest entry
(u16 name length, utf-8 name, 3-byte dtype tag ``<f4``, u8 ndim, u32 dims),
followed by every array's raw contiguous float32 little-endian data in
manifest order. Reading then rewriting a file reproduces it bitwise.

In-memory parameters are float64; storage is float32 by format.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..tape import DTYPE
from .config import FieldConfig
from .params import Field4DParams

MAGIC = b"I4D1"
_DTYPE_TAG = b"<f4"


def write_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(arrays)))
        order = list(arrays)
        for name in order:
            arr = arrays[name]
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(_DTYPE_TAG)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
        for name in order:
            data = np.ascontiguousarray(arrays[name], dtype="<f4")
            f.write(data.tobytes())


def read_arrays(path) -> dict[str, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a tensor container (bad magic)")
    off = 4
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    manifest = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        tag = raw[off : off + 3]
        off += 3
        if tag != _DTYPE_TAG:
            raise ValueError(f"{path}: unsupported dtype tag {tag!r}")
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        manifest.append((name, shape))
    out: dict[str, np.ndarray] = {}
    for name, shape in manifest:
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        out[name] = arr
    if off != len(raw):
        raise ValueError(f"{path}: {len(raw) - off} trailing bytes")
    return out


def _config_meta(c: FieldConfig) -> np.ndarray:
    return np.array(
        [
            c.plane_res,
            c.d_low,
            c.keyframes,
            c.levels,
            c.table_log2,
            c.d_level,
            c.hash_base_res,
            c.hash_growth,
            c.mlp_hidden,
            c.mlp_layers,
            c.sphere_radius_frac,
            *c.bounds_lo,
            *c.bounds_hi,
        ],
        dtype=DTYPE,
    )


def _meta_config(m: np.ndarray) -> FieldConfig:
    return FieldConfig(
        plane_res=int(m[0]),
        d_low=int(m[1]),
        keyframes=int(m[2]),
        levels=int(m[3]),
        table_log2=int(m[4]),
        d_level=int(m[5]),
        hash_base_res=int(m[6]),
        hash_growth=float(m[7]),
        mlp_hidden=int(m[8]),
        mlp_layers=int(m[9]),
        sphere_radius_frac=float(m[10]),
        bounds_lo=tuple(float(v) for v in m[11:14]),
        bounds_hi=tuple(float(v) for v in m[14:17]),
    )


def save_params(params: Field4DParams, path) -> None:
    arrays = {"meta": _config_meta(params.config), "keyframe_times": params.keyframe_times}
    arrays["planes"] = params.planes
    arrays["hash"] = params.hash_tables
    for i, (w, b) in enumerate(zip(params.sdf_weights, params.sdf_biases)):
        arrays[f"sdf.W{i}"] = w
        arrays[f"sdf.b{i}"] = b
    for i, (w, b) in enumerate(zip(params.mat_weights, params.mat_biases)):
        arrays[f"mat.W{i}"] = w
        arrays[f"mat.b{i}"] = b
    write_arrays(path, arrays)


def load_params(path) -> Field4DParams:
    arrays = read_arrays(path)
    config = _meta_config(arrays["meta"].astype(DTYPE))
    n_layers = config.mlp_layers
    return Field4DParams(
        config=config,
        planes=arrays["planes"].astype(DTYPE),
        hash_tables=arrays["hash"].astype(DTYPE),
        sdf_weights=[arrays[f"sdf.W{i}"].astype(DTYPE) for i in range(n_layers + 1)],
        sdf_biases=[arrays[f"sdf.b{i}"].astype(DTYPE) for i in range(n_layers + 1)],
        mat_weights=[arrays[f"mat.W{i}"].astype(DTYPE) for i in range(n_layers + 1)],
        mat_biases=[arrays[f"mat.b{i}"].astype(DTYPE) for i in range(n_layers + 1)],
        keyframe_times=arrays["keyframe_times"].astype(DTYPE),
    )
