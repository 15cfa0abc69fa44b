"""Pluggable image feature encoders.

Anything with ``patch_size``, ``channels``, and ``__call__(image) -> feature
map`` qualifies. The built-in toy encoder is a deterministic stand-in for a
pretrained self-supervised backbone: per-patch color statistics plus an
oriented gradient histogram. It commutes with whole-patch translations by
construction.
"""

from __future__ import annotations

import numpy as np

from ..tape import DTYPE


class ToyEncoder:
    """Per-patch statistics: mean RGB (3), RGB variance (3), and a 4-bin
    gradient-orientation histogram of the gray channel (4)."""

    def __init__(self, patch_size: int = 8):
        self.patch_size = patch_size
        self.channels = 10

    def __call__(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=DTYPE)
        p = self.patch_size
        h, w = image.shape[:2]
        if h % p or w % p:
            raise ValueError(f"image dims {h}x{w} not divisible by patch size {p}")
        gh, gw = h // p, w // p
        patches = image.reshape(gh, p, gw, p, 3).transpose(0, 2, 1, 3, 4)  # (gh,gw,p,p,3)
        mean = patches.mean(axis=(2, 3))
        var = patches.var(axis=(2, 3))

        gray = image.mean(axis=2)
        gx = np.zeros_like(gray)
        gy = np.zeros_like(gray)
        gx[:, 1:-1] = (gray[:, 2:] - gray[:, :-2]) / 2.0
        gy[1:-1, :] = (gray[2:, :] - gray[:-2, :]) / 2.0
        mag = np.hypot(gx, gy)
        ang = np.mod(np.arctan2(gy, gx), np.pi)  # orientation, not direction
        bins = np.minimum((ang / (np.pi / 4)).astype(np.int64), 3)
        hist = np.zeros((gh, gw, 4), dtype=DTYPE)
        py, px = np.divmod(np.arange(h * w), w)
        np.add.at(
            hist,
            (py // p, px // p, bins.reshape(-1)),
            mag.reshape(-1),
        )
        hist /= p * p
        return np.concatenate([mean, var, hist], axis=2)


def encode_features(image: np.ndarray, encoder) -> np.ndarray:
    """Run an encoder, checking the contract on the way out."""
    fmap = encoder(image)
    p = encoder.patch_size
    expect = (image.shape[0] // p, image.shape[1] // p, encoder.channels)
    if fmap.shape != expect:
        raise ValueError(f"encoder returned {fmap.shape}, expected {expect}")
    return fmap
