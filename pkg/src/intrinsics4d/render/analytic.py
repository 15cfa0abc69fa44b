"""Closed-form fields for tests and ground-truth targets.

These satisfy the same protocol as the learned field (bounds, fast sdf,
tape-aware query) but have no learnable leaves, so replaying them on a tape
records constants only.
"""

from __future__ import annotations

import numpy as np

from ..tape import DTYPE


class AnalyticField:
    """SDF given by a callable; spatially constant Disney materials."""

    def __init__(
        self,
        sdf_fn,
        k_d=(0.8, 0.3, 0.2),
        roughness=0.6,
        metallic=0.1,
        bounds_lo=(-1.0, -1.0, -1.0),
        bounds_hi=(1.0, 1.0, 1.0),
        k_d_fn=None,
    ):
        self._sdf_fn = sdf_fn
        self._k_d = np.asarray(k_d, dtype=DTYPE)
        self._k_d_fn = k_d_fn
        self._orm = np.array([0.0, roughness, metallic], dtype=DTYPE)
        self._lo = np.asarray(bounds_lo, dtype=DTYPE)
        self._hi = np.asarray(bounds_hi, dtype=DTYPE)

    @property
    def bounds(self):
        return self._lo, self._hi

    def leaves(self):
        return {}

    def sdf(self, pts, ts):
        pts = np.atleast_2d(np.asarray(pts, dtype=DTYPE))
        return self._sdf_fn(pts, ts)

    def sdf_diff(self, pts, ts, view=None):
        return self.sdf(pts, ts)

    def query(self, pts, ts, view=None):
        pts = np.atleast_2d(np.asarray(pts, dtype=DTYPE))
        n = pts.shape[0]
        kd = (
            self._k_d_fn(pts, ts)
            if self._k_d_fn is not None
            else np.broadcast_to(self._k_d, (n, 3)).copy()
        )
        return self.sdf(pts, ts), kd, np.broadcast_to(self._orm, (n, 3)).copy()


def sphere_field(radius=0.5, center=(0.0, 0.0, 0.0), **kw) -> AnalyticField:
    center = np.asarray(center, dtype=DTYPE)

    def sdf_fn(pts, ts):
        return np.linalg.norm(pts - center, axis=1) - radius

    return AnalyticField(sdf_fn, **kw)


def animated_sphere_field(
    radius0=0.30,
    radius1=0.45,
    center=(0.0, 0.0, 0.0),
    wobble=0.1,
    **kw,
) -> AnalyticField:
    """Sphere whose radius grows linearly in t and center bobs vertically;
    the ground truth for end-to-end distillation checks."""
    center = np.asarray(center, dtype=DTYPE)

    def sdf_fn(pts, ts):
        t = float(np.mean(ts))
        c = center + np.array([0.0, wobble * (t - 0.5), 0.0])
        r = radius0 + (radius1 - radius0) * t
        return np.linalg.norm(pts - c, axis=1) - r

    return AnalyticField(sdf_fn, **kw)


def halfspace_field(y0=0.0, **kw) -> AnalyticField:
    """Solid below the plane y = y0."""

    def sdf_fn(pts, ts):
        return pts[:, 1] - y0

    return AnalyticField(sdf_fn, **kw)


def empty_field(**kw) -> AnalyticField:
    def sdf_fn(pts, ts):
        return np.full(pts.shape[0], 1e3, dtype=DTYPE)

    return AnalyticField(sdf_fn, **kw)
