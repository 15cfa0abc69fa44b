"""Equirectangular environment lighting."""

from __future__ import annotations

import numpy as np

from .. import tape as tp
from ..tape import DTYPE


class EnvironmentMap:
    """Latitude-longitude radiance grid, +Y up, linear units, values >= 0.

    Texel (0, u) is the zenith row. The bilinear lookup wraps in longitude
    and clamps at the poles; lookups are differentiable with respect to the
    query direction (the radiance grid itself is a constant).
    """

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=DTYPE)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError("environment map must be (H, W, 3)")
        if np.any(data < 0) or not np.all(np.isfinite(data)):
            raise ValueError("environment radiance must be finite and >= 0")
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    def mean_radiance(self) -> np.ndarray:
        """Solid-angle-weighted mean radiance (3,)."""
        h = self.data.shape[0]
        theta = (np.arange(h) + 0.5) / h * np.pi
        w = np.sin(theta)
        return (self.data * w[:, None, None]).sum(axis=(0, 1)) / (w.sum() * self.data.shape[1])

    def sample(self, dirs):
        """Bilinear radiance lookup for unit directions (N, 3).

        Accepts Tensors; the result then carries d(radiance)/d(direction).
        """
        he, we = self.data.shape[:2]
        y = tp.clip(tp.getitem(dirs, (Ellipsis, 1)), -1.0, 1.0)
        theta = tp.arccos(y)
        phi = tp.arctan2(tp.getitem(dirs, (Ellipsis, 2)), tp.getitem(dirs, (Ellipsis, 0)))
        u = tp.mul(tp.add(phi, np.pi), we / (2.0 * np.pi))
        v = tp.mul(theta, he / np.pi)

        gu = tp.add(u, -0.5)
        gv = tp.clip(tp.add(v, -0.5), 0.0, he - 1.0)
        iu = np.floor(tp.value_of(gu)).astype(np.int64)
        iv = np.clip(np.floor(tp.value_of(gv)).astype(np.int64), 0, he - 2)
        fu = tp.sub(gu, iu.astype(DTYPE))
        fv = tp.sub(gv, iv.astype(DTYPE))

        iu0 = np.mod(iu, we)
        iu1 = np.mod(iu + 1, we)
        c00 = self.data[iv, iu0]
        c01 = self.data[iv, iu1]
        c10 = self.data[iv + 1, iu0]
        c11 = self.data[iv + 1, iu1]
        wu1 = tp.reshape(fu, fu.shape + (1,)) if isinstance(fu, tp.Tensor) else fu[..., None]
        wv1 = tp.reshape(fv, fv.shape + (1,)) if isinstance(fv, tp.Tensor) else fv[..., None]
        one = 1.0
        top = tp.add(tp.mul(c00, tp.sub(one, wu1)), tp.mul(c01, wu1))
        bot = tp.add(tp.mul(c10, tp.sub(one, wu1)), tp.mul(c11, wu1))
        return tp.add(tp.mul(top, tp.sub(one, wv1)), tp.mul(bot, wv1))


def uniform_environment(radiance=1.0, height=8, width=16) -> EnvironmentMap:
    data = np.full((height, width, 3), 0.0, dtype=DTYPE) + np.asarray(radiance, dtype=DTYPE)
    return EnvironmentMap(data)


def gradient_environment(height=32, width=64, horizon=(0.35, 0.30, 0.25), zenith=(0.7, 0.8, 1.0), sun_strength=4.0) -> EnvironmentMap:
    """Smooth sky-like test light: vertical gradient plus a soft sun lobe."""
    theta = (np.arange(height) + 0.5) / height * np.pi
    phi = (np.arange(width) + 0.5) / width * 2 * np.pi - np.pi
    t = np.cos(theta)[:, None, None] * 0.5 + 0.5  # 1 at zenith, 0 at nadir
    base = t * np.asarray(zenith) + (1 - t) * np.asarray(horizon)
    base = np.broadcast_to(base, (height, width, 3)).copy()
    sun_dir = np.array([0.5, 0.7, 0.3])
    sun_dir = sun_dir / np.linalg.norm(sun_dir)
    st = np.sin(theta)[:, None]
    dirs = np.stack(
        [st * np.cos(phi)[None, :], np.cos(theta)[:, None] * np.ones_like(phi)[None, :], st * np.sin(phi)[None, :]],
        axis=-1,
    )
    cos_sun = np.clip(dirs @ sun_dir, 0, 1)
    base += sun_strength * cos_sun[..., None] ** 32 * np.array([1.0, 0.95, 0.85])
    return EnvironmentMap(base)
