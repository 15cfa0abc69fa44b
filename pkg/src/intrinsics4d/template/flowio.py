"""FLW1 flow-target files: magic, (frames, H, W) u32 header, then f32
little-endian flow (frames, H, W, 2) followed by coverage (frames, H, W)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..tape import DTYPE

MAGIC = b"FLW1"


def write_flow(path, flows: np.ndarray, masks: np.ndarray) -> None:
    flows = np.asarray(flows, dtype="<f4")
    masks = np.asarray(masks, dtype="<f4")
    t, h, w, c = flows.shape
    if c != 2 or masks.shape != (t, h, w):
        raise ValueError("flows must be (T,H,W,2) with matching (T,H,W) masks")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", t, h, w))
        f.write(np.ascontiguousarray(flows).tobytes())
        f.write(np.ascontiguousarray(masks).tobytes())


def read_flow(path):
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a flow-target file")
    t, h, w = struct.unpack_from("<III", raw, 4)
    off = 16
    n = t * h * w * 2
    flows = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(t, h, w, 2)
    off += 4 * n
    masks = np.frombuffer(raw, dtype="<f4", count=t * h * w, offset=off).reshape(t, h, w)
    return flows.astype(DTYPE), masks.astype(DTYPE) > 0.5
