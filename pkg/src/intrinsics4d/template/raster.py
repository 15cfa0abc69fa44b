"""Z-buffered triangle rasterization: template renders and flow maps."""

from __future__ import annotations

import numpy as np

from .. import backend
from ..backend import njit
from ..tape import DTYPE
from ..render.camera import CameraPose
from .mesh import DeformableMeshSequence, face_normals

BG_COLOR = np.array([0.06, 0.06, 0.09], dtype=DTYPE)


def project(camera: CameraPose, verts: np.ndarray):
    """World points to pixel-center coordinates plus positive view depth.

    Inverse of the primary-ray mapping in ``render.camera.ray_grid``.
    """
    v_cam = (verts - camera.translation) @ camera.rotation
    depth = -v_cam[:, 2]
    tan = np.tan(camera.fov_y / 2.0)
    aspect = camera.width / camera.height
    safe = np.maximum(depth, 1e-9)
    ndc_x = v_cam[:, 0] / safe / (tan * aspect)
    ndc_y = v_cam[:, 1] / safe / tan
    px = (ndc_x + 1.0) / 2.0 * camera.width - 0.5
    py = (1.0 - ndc_y) / 2.0 * camera.height - 0.5
    return np.stack([px, py], axis=1), depth


@njit(cache=True)
def _raster_kernel(xy, depth, faces, h, w):  # pragma: no cover - numba path
    zbuf = np.full((h, w), 1e30)
    tri = np.full((h, w), -1, np.int64)
    bary = np.zeros((h, w, 3))
    for f in range(faces.shape[0]):
        ia, ib, ic = faces[f, 0], faces[f, 1], faces[f, 2]
        if depth[ia] < 1e-6 or depth[ib] < 1e-6 or depth[ic] < 1e-6:
            continue
        x0, y0 = xy[ia, 0], xy[ia, 1]
        x1, y1 = xy[ib, 0], xy[ib, 1]
        x2, y2 = xy[ic, 0], xy[ic, 1]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < 1e-12:
            continue
        xmin = max(int(np.floor(min(x0, min(x1, x2)))), 0)
        xmax = min(int(np.ceil(max(x0, max(x1, x2)))), w - 1)
        ymin = max(int(np.floor(min(y0, min(y1, y2)))), 0)
        ymax = min(int(np.ceil(max(y0, max(y1, y2)))), h - 1)
        for py in range(ymin, ymax + 1):
            for px in range(xmin, xmax + 1):
                w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / area
                w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                z = w0 * depth[ia] + w1 * depth[ib] + w2 * depth[ic]
                if z < zbuf[py, px]:
                    zbuf[py, px] = z
                    tri[py, px] = f
                    bary[py, px, 0] = w0
                    bary[py, px, 1] = w1
                    bary[py, px, 2] = w2
    return zbuf, tri, bary


def _raster_python(xy, depth, faces, h, w):
    zbuf = np.full((h, w), 1e30, dtype=DTYPE)
    tri = np.full((h, w), -1, np.int64)
    bary = np.zeros((h, w, 3), dtype=DTYPE)
    for f in range(faces.shape[0]):
        ia, ib, ic = faces[f]
        if depth[ia] < 1e-6 or depth[ib] < 1e-6 or depth[ic] < 1e-6:
            continue
        p = xy[[ia, ib, ic]]
        area = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
        if abs(area) < 1e-12:
            continue
        xmin = max(int(np.floor(p[:, 0].min())), 0)
        xmax = min(int(np.ceil(p[:, 0].max())), w - 1)
        ymin = max(int(np.floor(p[:, 1].min())), 0)
        ymax = min(int(np.ceil(p[:, 1].max())), h - 1)
        if xmin > xmax or ymin > ymax:
            continue
        gx, gy = np.meshgrid(np.arange(xmin, xmax + 1), np.arange(ymin, ymax + 1))
        w0 = ((p[1, 0] - gx) * (p[2, 1] - gy) - (p[2, 0] - gx) * (p[1, 1] - gy)) / area
        w1 = ((p[2, 0] - gx) * (p[0, 1] - gy) - (p[0, 0] - gx) * (p[2, 1] - gy)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        z = w0 * depth[ia] + w1 * depth[ib] + w2 * depth[ic]
        better = inside & (z < zbuf[ymin : ymax + 1, xmin : xmax + 1])
        sub = (slice(ymin, ymax + 1), slice(xmin, xmax + 1))
        zbuf[sub][better] = z[better]
        tri[sub][better] = f
        for k, wk in enumerate((w0, w1, w2)):
            bary[sub + (k,)][better] = wk[better]
    return zbuf, tri, bary


def rasterize(camera: CameraPose, verts: np.ndarray, faces: np.ndarray):
    """Z-buffer pass; returns (zbuf, tri_id, barycentrics), tri_id = -1 at
    uncovered pixels."""
    camera.validate()
    xy, depth = project(camera, verts)
    impl = _raster_kernel if backend.USE_NUMBA else _raster_python
    return impl(
        np.ascontiguousarray(xy),
        np.ascontiguousarray(depth),
        np.ascontiguousarray(faces),
        camera.height,
        camera.width,
    )


def render_template(seq: DeformableMeshSequence, camera: CameraPose, frame: int, background=BG_COLOR) -> np.ndarray:
    """Deterministic flat-shaded render of one frame: barycentric vertex
    colors scaled by a per-face headlight, constant background."""
    if not 0 <= frame < seq.frame_count:
        raise ValueError(f"frame {frame} out of range")
    verts = seq.vertices_at(frame)
    zbuf, tri, bary = rasterize(camera, verts, seq.faces)
    h, w = camera.height, camera.width
    img = np.broadcast_to(np.asarray(background, dtype=DTYPE), (h, w, 3)).copy()
    covered = tri >= 0
    if not covered.any():
        return img
    fidx = tri[covered]
    corner_cols = seq.colors[seq.faces[fidx]]  # (P, 3 corners, 3)
    cols = np.einsum("pk,pkc->pc", bary[covered], corner_cols)
    n = face_normals(verts, seq.faces)
    centroids = verts[seq.faces].mean(axis=1)
    to_cam = camera.translation - centroids
    to_cam /= np.maximum(np.linalg.norm(to_cam, axis=1, keepdims=True), 1e-12)
    head = 0.25 + 0.75 * np.abs(np.sum(n * to_cam, axis=1))
    img[covered] = cols * head[fidx][:, None]
    return img


def rasterize_flow(seq: DeformableMeshSequence, frame_a: int, frame_b: int, camera: CameraPose):
    """Screen-space flow of the frame-a surface toward frame b.

    Coverage and barycentrics come from the frame-a z-buffer; per covered
    pixel the flow is the interpolated displacement of the surface point's
    projection. Returns (flow (H, W, 2), mask (H, W) bool).
    """
    for f in (frame_a, frame_b):
        if not 0 <= f < seq.frame_count:
            raise ValueError(f"frame {f} out of range")
    va, vb = seq.vertices_at(frame_a), seq.vertices_at(frame_b)
    xy_a, _ = project(camera, va)
    xy_b, _ = project(camera, vb)
    zbuf, tri, bary = rasterize(camera, va, seq.faces)
    h, w = camera.height, camera.width
    flow = np.zeros((h, w, 2), dtype=DTYPE)
    mask = tri >= 0
    if mask.any():
        vflow = xy_b - xy_a
        corner_flow = vflow[seq.faces[tri[mask]]]
        flow[mask] = np.einsum("pk,pkc->pc", bary[mask], corner_flow)
    return flow, mask
