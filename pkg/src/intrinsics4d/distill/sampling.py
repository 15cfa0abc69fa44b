"""Camera-and-timestamp sampling for the distillation loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..render.camera import orbit_pose


@dataclass
class ViewTimeConfig:
    azimuth_range: tuple = (0.0, 2.0 * np.pi)
    elevation_range: tuple = (0.1, 0.6)  # radians above the horizontal
    radius: float = 1.9
    center: tuple = (0.0, 0.0, 0.0)
    fov_y: float = 0.7
    width: int = 24
    height: int = 24
    anchors: list | None = None  # optional [(azimuth, elevation, t), ...]


def sample_view_time(rng: np.random.Generator, config: ViewTimeConfig):
    """Draw (camera, t). Continuous mode samples azimuth and elevation
    uniformly over their ranges and t uniform in [0, 1]; anchor mode picks
    uniformly from the configured discrete set."""
    if config.anchors:
        az, el, t = config.anchors[int(rng.integers(len(config.anchors)))]
    else:
        a0, a1 = config.azimuth_range
        e0, e1 = config.elevation_range
        az = float(rng.uniform(a0, a1))
        el = float(rng.uniform(e0, e1))
        t = float(rng.uniform(0.0, 1.0))
    cam = orbit_pose(
        az,
        el,
        config.radius,
        center=config.center,
        fov_y=config.fov_y,
        width=config.width,
        height=config.height,
    )
    return cam, float(t)
