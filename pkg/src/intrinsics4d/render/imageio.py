"""Minimal image files: 8-bit PNG (sRGB) and PFM (linear float)."""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..tape import DTYPE


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    x = np.clip(linear, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def write_png(path, rgb: np.ndarray, srgb: bool = True) -> None:
    """8-bit RGB PNG; applies the sRGB transfer unless ``srgb=False``."""
    img = srgb_encode(rgb) if srgb else np.clip(rgb, 0.0, 1.0)
    data = (img * 255.0 + 0.5).astype(np.uint8)
    h, w = data.shape[:2]
    if data.ndim == 2:
        data = np.repeat(data[:, :, None], 3, axis=2)
    raw = b"".join(b"\x00" + data[i].tobytes() for i in range(h))

    def chunk(tag, payload):
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    hdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    png = b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", hdr) + chunk(b"IDAT", zlib.compress(raw, 6)) + chunk(b"IEND", b"")
    Path(path).write_bytes(png)


def write_pfm(path, rgb: np.ndarray) -> None:
    """Linear float image, little-endian PFM (rows bottom-up per spec)."""
    arr = np.asarray(rgb, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    if c not in (1, 3):
        raise ValueError("PFM supports 1 or 3 channels")
    header = (b"PF\n" if c == 3 else b"Pf\n") + f"{w} {h}\n-1.0\n".encode()
    Path(path).write_bytes(header + arr[::-1].tobytes())


def read_pfm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    kind, dims, scale, data = parts[0], parts[1], float(parts[2]), parts[3]
    w, h = (int(x) for x in dims.split())
    c = 3 if kind == b"PF" else 1
    dt = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(data, dtype=dt, count=h * w * c).reshape(h, w, c)
    return img[::-1].astype(DTYPE)
