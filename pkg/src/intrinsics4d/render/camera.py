"""Pinhole camera poses and primary-ray generation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tape import DTYPE


@dataclass
class CameraPose:
    """Camera-to-world rotation, position, and vertical field of view.

    The camera looks down its local -z axis; +y is up in camera space.
    """

    rotation: np.ndarray  # (3, 3) orthonormal, det +1
    translation: np.ndarray  # (3,)
    fov_y: float  # radians
    width: int
    height: int

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=DTYPE)
        self.translation = np.asarray(self.translation, dtype=DTYPE)
        self.validate()

    def validate(self):
        r = self.rotation
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        err = np.max(np.abs(r.T @ r - np.eye(3)))
        if err > 1e-6 or abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ValueError("rotation must be orthonormal with determinant +1")
        if not (0 < self.fov_y < np.pi):
            raise ValueError("fov_y must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be positive")


def look_at(eye, center, up=(0.0, 1.0, 0.0), fov_y=0.7, width=64, height=64) -> CameraPose:
    eye = np.asarray(eye, dtype=DTYPE)
    center = np.asarray(center, dtype=DTYPE)
    fwd = center - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=DTYPE)
    right = np.cross(fwd, up)
    nr = np.linalg.norm(right)
    if nr < 1e-9:  # looking straight along up: pick another basis
        up = np.array([0.0, 0.0, 1.0]) if abs(fwd[1]) > 0.9 else np.array([0.0, 1.0, 0.0])
        right = np.cross(fwd, up)
        nr = np.linalg.norm(right)
    right = right / nr
    true_up = np.cross(right, fwd)
    rot = np.stack([right, true_up, -fwd], axis=1)  # columns: x, y, z axes
    return CameraPose(rotation=rot, translation=eye, fov_y=fov_y, width=width, height=height)


def orbit_pose(azimuth, elevation, radius, center=(0.0, 0.0, 0.0), fov_y=0.7, width=64, height=64) -> CameraPose:
    """Camera on a sphere around ``center``, looking inward. Elevation is
    measured from the horizontal plane, +Y up."""
    center = np.asarray(center, dtype=DTYPE)
    ce, se = np.cos(elevation), np.sin(elevation)
    eye = center + radius * np.array([ce * np.cos(azimuth), se, ce * np.sin(azimuth)])
    return look_at(eye, center, fov_y=fov_y, width=width, height=height)


def ray_grid(camera: CameraPose):
    """World-space origins and unit directions for all pixel centers,
    row-major (H*W, 3)."""
    h, w = camera.height, camera.width
    aspect = w / h
    tan = np.tan(camera.fov_y / 2.0)
    j = (np.arange(w, dtype=DTYPE) + 0.5) / w * 2.0 - 1.0
    i = 1.0 - (np.arange(h, dtype=DTYPE) + 0.5) / h * 2.0
    xs, ys = np.meshgrid(j * tan * aspect, i * tan, indexing="xy")
    d_cam = np.stack([xs.reshape(-1), ys.reshape(-1), -np.ones(h * w, dtype=DTYPE)], axis=1)
    d_world = d_cam @ camera.rotation.T
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    origins = np.broadcast_to(camera.translation, (h * w, 3)).copy()
    return origins, d_world
