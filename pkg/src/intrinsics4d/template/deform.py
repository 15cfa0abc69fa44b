"""Fitting per-frame vertex offsets to flow targets.

The flow loss is differentiated with the gradient tape: coverage and
barycentrics come from the canonical frame (whose offsets are pinned to
zero), so only the target-frame projections carry gradients. ARAP enters
through its own fixed-rotation analytic gradient.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import tape as tp
from ..tape import DTYPE
from ..render.camera import CameraPose
from .arap import arap_energy, one_ring_edges
from .mesh import DeformableMeshSequence
from .raster import project, rasterize


@dataclass
class FitConfig:
    iterations: int = 120
    step_size: float = 0.02
    lambda_arap: float = 0.05
    lambda_sil: float = 0.0


@dataclass
class FlowTargets:
    flows: np.ndarray  # (T, H, W, 2), frame f measured from the canonical frame
    masks: np.ndarray  # (T, H, W) bool coverage
    silhouettes: np.ndarray | None = None  # (T, H, W) bool, optional


def _distance_transform(mask: np.ndarray) -> np.ndarray:
    """Pixel distance to the nearest covered pixel (brute force; desk-scale)."""
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        return np.full((h, w), np.hypot(h, w), dtype=DTYPE)
    gy, gx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    d2 = (gy.reshape(-1, 1) - ys[None, :]) ** 2 + (gx.reshape(-1, 1) - xs[None, :]) ** 2
    return np.sqrt(d2.min(axis=1)).reshape(h, w).astype(DTYPE)


def _project_diff(camera: CameraPose, verts):
    """Tape-aware version of raster.project (same math)."""
    rel = tp.sub(verts, camera.translation)
    v_cam = tp.matmul(rel, camera.rotation)
    depth = tp.maximum(tp.neg(tp.getitem(v_cam, (slice(None), 2))), 1e-9)
    tan = np.tan(camera.fov_y / 2.0)
    aspect = camera.width / camera.height
    ndc_x = tp.div(tp.div(tp.getitem(v_cam, (slice(None), 0)), depth), tan * aspect)
    ndc_y = tp.div(tp.div(tp.getitem(v_cam, (slice(None), 1)), depth), tan)
    px = tp.sub(tp.mul(tp.add(ndc_x, 1.0), camera.width / 2.0), 0.5)
    py = tp.sub(tp.mul(tp.sub(1.0, ndc_y), camera.height / 2.0), 0.5)
    return tp.stack([px, py], axis=1)


def fit_deformation(
    seq: DeformableMeshSequence,
    targets: FlowTargets,
    cameras,
    config: FitConfig | None = None,
):
    """Optimize per-frame offsets to match target flow maps.

    Returns (fitted sequence, metrics dict with per-iteration total loss).
    The canonical frame never moves; frames whose target mask is empty are
    skipped with a warning.
    """
    config = config or FitConfig()
    seq.validate()
    frames = seq.frame_count
    if targets.flows.shape[0] != frames:
        raise ValueError("targets must cover every frame")
    if isinstance(cameras, CameraPose):
        cameras = [cameras] * frames

    out = DeformableMeshSequence(
        vertices=seq.vertices.copy(),
        faces=seq.faces.copy(),
        colors=seq.colors.copy(),
        offsets=seq.offsets.copy(),
        canonical_frame=seq.canonical_frame,
    )
    edges = one_ring_edges(out.faces, len(out.vertices))

    # canonical-frame rasterization is constant through the fit
    frozen = {}
    skipped = set()
    for f in range(frames):
        if f == out.canonical_frame:
            continue
        cam = cameras[f]
        _, tri, bary = rasterize(cam, out.vertices, out.faces)
        covered = (tri >= 0) & targets.masks[f]
        if not covered.any():
            warnings.warn(f"frame {f}: no covered pixels in common, skipping")
            skipped.add(f)
            continue
        entry = {
            "cam": cam,
            "vid": out.faces[tri[covered]],
            "bary": bary[covered],
            "target": targets.flows[f][covered],
            "xy_a": project(cam, out.vertices)[0],
        }
        if config.lambda_sil > 0 and targets.silhouettes is not None:
            entry["dt"] = _distance_transform(targets.silhouettes[f])
        frozen[f] = entry

    adam_m = {f: np.zeros_like(out.offsets[f]) for f in frozen}
    adam_v = {f: np.zeros_like(out.offsets[f]) for f in frozen}
    history = []
    cooldown = max(1, int(0.2 * config.iterations))
    for it in range(config.iterations):
        # constant rate, then a short cosine cooldown: Adam sign-normalizes
        # even vanishing gradients, so without the cooldown the offsets
        # chatter at step-size amplitude around the optimum
        rest = config.iterations - it
        if rest >= cooldown:
            lr = config.step_size
        else:
            lr = config.step_size * (0.02 + 0.98 * 0.5 * (1.0 + np.cos(np.pi * (cooldown - rest) / cooldown)))
        total = 0.0
        for f, fr in frozen.items():
            tape = tp.Tape()
            off = tape.leaf(out.offsets[f], "off")
            verts_b = tp.add(off, out.vertices)
            xy_b = _project_diff(fr["cam"], verts_b)
            vflow = tp.sub(xy_b, fr["xy_a"])
            corner = tp.take_rows(vflow, fr["vid"].reshape(-1))
            corner = tp.reshape(corner, (len(fr["vid"]), 3, 2))
            fp = tp.tsum(tp.mul(corner, fr["bary"][:, :, None]), axis=1)
            loss = tp.tmean(tp.absolute(tp.sub(fp, fr["target"])))
            if "dt" in fr:
                loss = tp.add(loss, tp.mul(config.lambda_sil, _sil_penalty(fr["dt"], xy_b)))
            e_arap, g_arap = arap_energy(out.vertices, out.faces, out.vertices + out.offsets[f], edges)
            if e_arap < 1e-12:  # SVD float noise, not signal
                g_arap = np.zeros_like(g_arap)
            g = tape.backward(loss, np.asarray(1.0))["off"]
            g = g + config.lambda_arap * g_arap
            total += float(loss.value) + config.lambda_arap * e_arap
            if not np.any(g):
                continue

            m, v = adam_m[f], adam_v[f]
            m[...] = 0.9 * m + 0.1 * g
            v[...] = 0.99 * v + 0.01 * g * g
            mh = m / (1 - 0.9 ** (it + 1))
            vh = v / (1 - 0.99 ** (it + 1))
            out.offsets[f] -= lr * mh / (np.sqrt(vh) + 1e-8)
        history.append(total)
    out.offsets[out.canonical_frame] = 0.0
    if history and history[-1] >= history[0] and history[0] > 0:
        warnings.warn("deformation fit did not reduce the loss")
    return out, {"loss": history, "skipped": sorted(skipped)}


def _sil_penalty(dt: np.ndarray, xy_b):
    """Mean squared silhouette distance of projected vertices (bilinear DT)."""
    h, w = dt.shape
    x = tp.clip(tp.getitem(xy_b, (slice(None), 0)), 0.0, w - 1.001)
    y = tp.clip(tp.getitem(xy_b, (slice(None), 1)), 0.0, h - 1.001)
    ix = np.floor(tp.value_of(x)).astype(np.int64)
    iy = np.floor(tp.value_of(y)).astype(np.int64)
    fx = tp.sub(x, ix.astype(DTYPE))
    fy = tp.sub(y, iy.astype(DTYPE))
    d00, d01 = dt[iy, ix], dt[iy, ix + 1]
    d10, d11 = dt[iy + 1, ix], dt[iy + 1, ix + 1]
    top = tp.add(tp.mul(d00, tp.sub(1.0, fx)), tp.mul(d01, fx))
    bot = tp.add(tp.mul(d10, tp.sub(1.0, fx)), tp.mul(d11, fx))
    d = tp.add(tp.mul(top, tp.sub(1.0, fy)), tp.mul(bot, fy))
    return tp.tmean(tp.mul(d, d))
