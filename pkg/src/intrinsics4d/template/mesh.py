"""Deformable mesh sequences and procedural desk-scale test assets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tape import DTYPE


@dataclass
class DeformableMeshSequence:
    """Canonical mesh plus per-frame vertex offsets.

    ``offsets[canonical_frame]`` must be exactly zero; faces index into the
    canonical vertex array.
    """

    vertices: np.ndarray  # (N, 3) canonical
    faces: np.ndarray  # (M, 3)
    colors: np.ndarray  # (N, 3) in [0, 1]
    offsets: np.ndarray  # (T, N, 3)
    canonical_frame: int = 0

    @property
    def frame_count(self) -> int:
        return self.offsets.shape[0]

    def vertices_at(self, frame: int) -> np.ndarray:
        return self.vertices + self.offsets[frame]

    def validate(self) -> None:
        n = len(self.vertices)
        if self.faces.size and self.faces.max() >= n:
            raise ValueError("face index out of range")
        if not np.all(self.offsets[self.canonical_frame] == 0.0):
            raise ValueError("canonical frame offsets must be zero")
        v = self.vertices[self.faces]
        areas = 0.5 * np.linalg.norm(
            np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1
        )
        if np.any(areas <= 1e-10):
            raise ValueError("canonical mesh has degenerate faces")


def face_normals(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v = verts[faces]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)


def uv_sphere(n_lat: int = 12, n_lon: int = 18, radius: float = 0.5):
    """Closed UV sphere with pole fans; returns (vertices, faces)."""
    verts = [np.array([0.0, radius, 0.0])]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append(
                radius * np.array([np.sin(th) * np.cos(ph), np.cos(th), np.sin(th) * np.sin(ph)])
            )
    verts.append(np.array([0.0, -radius, 0.0]))
    verts = np.asarray(verts, dtype=DTYPE)
    faces = []
    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)
    for j in range(n_lon):
        faces.append([0, ring(1, j + 1), ring(1, j)])
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c])
    last = len(verts) - 1
    for j in range(n_lon):
        faces.append([last, ring(n_lat - 1, j), ring(n_lat - 1, j + 1)])
    return verts, np.asarray(faces, dtype=np.int64)


def _checker_colors(verts: np.ndarray) -> np.ndarray:
    """Deterministic high-contrast vertex coloring (breaks view symmetry)."""
    phi = np.arctan2(verts[:, 2], verts[:, 0])
    th = np.arccos(np.clip(verts[:, 1] / np.maximum(np.linalg.norm(verts, axis=1), 1e-9), -1, 1))
    a = (np.floor(phi / np.pi * 4) + np.floor(th / np.pi * 4)) % 2
    base = np.stack([0.15 + 0.7 * a, 0.25 + 0.3 * np.cos(phi), 0.6 - 0.4 * a], axis=1)
    return np.clip(base, 0.0, 1.0)


def textured_sphere_sequence(
    frames: int = 8,
    n_lat: int = 12,
    n_lon: int = 18,
    radius0: float = 0.30,
    radius1: float = 0.45,
    wobble: float = 0.1,
    canonical_frame: int = 0,
) -> DeformableMeshSequence:
    """Growing, bobbing textured sphere; mirrors ``animated_sphere_field`` so
    template and field supervision line up in end-to-end checks."""
    verts, faces = uv_sphere(n_lat, n_lon, radius=1.0)
    colors = _checker_colors(verts)

    def frame_verts(f):
        t = f / max(frames - 1, 1)
        r = radius0 + (radius1 - radius0) * t
        return verts * r + np.array([0.0, wobble * (t - 0.5), 0.0])

    base = frame_verts(canonical_frame)
    offsets = np.stack([frame_verts(f) - base for f in range(frames)])
    offsets[canonical_frame] = 0.0
    seq = DeformableMeshSequence(
        vertices=base, faces=faces, colors=colors, offsets=offsets, canonical_frame=canonical_frame
    )
    seq.validate()
    return seq


def flower_proxy_sequence(
    frames: int = 8, n_lat: int = 16, n_lon: int = 24, radius: float = 0.35
) -> DeformableMeshSequence:
    """Sphere with petal lobes that open over time; a stand-in for organic
    assets when no mesh file is supplied."""
    verts, faces = uv_sphere(n_lat, n_lon, radius)
    phi = np.arctan2(verts[:, 2], verts[:, 0])
    r = np.linalg.norm(verts, axis=1)
    up = verts[:, 1] / np.maximum(r, 1e-9)
    petal = np.maximum(0.0, np.cos(5 * phi)) * np.maximum(0.0, 1 - np.abs(up))
    colors = np.stack(
        [0.8 - 0.3 * petal, 0.25 + 0.55 * petal, 0.30 + 0.2 * up], axis=1
    )
    dirs = verts / np.maximum(r[:, None], 1e-9)
    offsets = np.zeros((frames, len(verts), 3), dtype=DTYPE)
    for f in range(frames):
        t = f / max(frames - 1, 1)
        bloom = 0.35 * t * petal + 0.1 * t * np.maximum(0.0, -up)
        offsets[f] = dirs * bloom[:, None] * radius
    offsets[0] = 0.0
    seq = DeformableMeshSequence(
        vertices=verts, faces=faces, colors=np.clip(colors, 0, 1), offsets=offsets, canonical_frame=0
    )
    seq.validate()
    return seq
