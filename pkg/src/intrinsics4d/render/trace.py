"""Sphere tracing, shadow rays, and silhouette scans over an SDF field.

``field`` is anything exposing ``bounds`` and a fast batched ``sdf(pts, t)``;
both the learned hybrid field and the analytic test fields qualify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tape import DTYPE


@dataclass
class TraceOpts:
    max_steps: int = 128
    hit_eps_frac: float = 1e-3  # of the scene extent
    normal_h_frac: float = 1e-3
    max_dist: float | None = None


@dataclass
class SurfaceHit:
    position: np.ndarray  # (3,)
    normal: np.ndarray  # unit, oriented toward the viewer
    distance: float
    hit: bool


def extent_of(field) -> float:
    lo, hi = field.bounds
    return float(np.max(np.asarray(hi) - np.asarray(lo)))


def ray_aabb(origins, dirs, lo, hi):
    """Slab intersection; returns (t_enter, t_exit, intersects)."""
    inv = 1.0 / np.where(np.abs(dirs) < 1e-12, np.copysign(1e-12, dirs), dirs)
    t0 = (lo - origins) * inv
    t1 = (hi - origins) * inv
    tmin = np.minimum(t0, t1).max(axis=1)
    tmax = np.maximum(t0, t1).min(axis=1)
    tmin = np.maximum(tmin, 0.0)
    ok = tmax > tmin
    return tmin, tmax, ok


def sphere_trace_batch(field, origins, dirs, t, opts: TraceOpts):
    """March all rays simultaneously. Returns (pos, dist, hit_mask)."""
    lo, hi = field.bounds
    ext = extent_of(field)
    eps = opts.hit_eps_frac * ext
    max_dist_default = float(np.linalg.norm(np.asarray(hi) - np.asarray(lo))) * 2.0
    n = origins.shape[0]
    t_enter, t_exit, inside = ray_aabb(origins, dirs, np.asarray(lo), np.asarray(hi))
    limit = np.where(
        inside, np.minimum(t_exit, opts.max_dist or max_dist_default), 0.0
    )
    d = t_enter.copy()
    hit = np.zeros(n, dtype=bool)
    active = inside.copy()
    for _ in range(opts.max_steps):
        if not active.any():
            break
        pts = origins[active] + d[active, None] * dirs[active]
        s = field.sdf(pts, t)
        newly_hit = np.abs(s) < eps
        idx = np.flatnonzero(active)
        hit[idx[newly_hit]] = True
        step = np.maximum(np.abs(s), eps * 0.5) * np.sign(np.where(s == 0, 1.0, s))
        d[idx] += np.where(newly_hit, 0.0, step)
        overshoot = d[idx] > limit[idx]
        active[idx[newly_hit | overshoot]] = False
    pos = origins + d[:, None] * dirs
    return pos, d, hit


def sdf_normals(field, pts, t, h):
    """Central-difference normals of the SDF (fast, non-differentiable)."""
    n = pts.shape[0]
    offs = np.zeros((6, 3), dtype=DTYPE)
    offs[0, 0] = h
    offs[1, 0] = -h
    offs[2, 1] = h
    offs[3, 1] = -h
    offs[4, 2] = h
    offs[5, 2] = -h
    probe = (pts[None, :, :] + offs[:, None, :]).reshape(-1, 3)
    vals = field.sdf(probe, t).reshape(6, n)
    g = np.stack([vals[0] - vals[1], vals[2] - vals[3], vals[4] - vals[5]], axis=1) / (2 * h)
    return g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-12)


def sphere_trace(field, origin, direction, t, opts: TraceOpts | None = None) -> SurfaceHit:
    """Trace one ray and estimate the oriented surface normal at the hit."""
    opts = opts or TraceOpts()
    direction = np.asarray(direction, dtype=DTYPE)
    nrm = np.linalg.norm(direction)
    if abs(nrm - 1.0) > 1e-6:
        raise ValueError("ray direction must be unit length")
    pos, dist, hit = sphere_trace_batch(
        field, np.asarray(origin, dtype=DTYPE)[None, :], direction[None, :], t, opts
    )
    if not hit[0]:
        return SurfaceHit(pos[0], np.zeros(3), float(dist[0]), False)
    h = opts.normal_h_frac * extent_of(field)
    n = sdf_normals(field, pos[:1], t, h)[0]
    if np.dot(n, direction) > 0:
        n = -n
    return SurfaceHit(pos[0], n, float(dist[0]), True)


def visibility_batch(field, pts, dirs, normals, t, opts: TraceOpts):
    """Binary shadow rays from ``pts`` along ``dirs``; 1 = unoccluded.

    Rays start at x + 2*eps*n to escape the originating surface.
    """
    lo, hi = field.bounds
    ext = extent_of(field)
    eps = opts.hit_eps_frac * ext
    origins = pts + 2.0 * eps * normals
    n = origins.shape[0]
    vis = np.ones(n, dtype=DTYPE)
    _, t_exit, inside = ray_aabb(origins, dirs, np.asarray(lo), np.asarray(hi))
    d = np.full(n, eps, dtype=DTYPE)
    active = inside.copy()
    vis[~inside] = 1.0
    for _ in range(opts.max_steps):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        p = origins[idx] + d[idx, None] * dirs[idx]
        s = field.sdf(p, t)
        blocked = s < eps
        vis[idx[blocked]] = 0.0
        d[idx] += np.maximum(s, eps)
        escaped = d[idx] > t_exit[idx]
        active[idx[blocked | escaped]] = False
    return vis


def visibility(field, x, omega_i, t, normal=None, opts: TraceOpts | None = None) -> float:
    """Shadow-ray visibility of one surface point along one direction."""
    opts = opts or TraceOpts()
    if normal is None:
        h = opts.normal_h_frac * extent_of(field)
        normal = sdf_normals(field, np.asarray(x, dtype=DTYPE)[None, :], t, h)[0]
    v = visibility_batch(
        field,
        np.asarray(x, dtype=DTYPE)[None, :],
        np.asarray(omega_i, dtype=DTYPE)[None, :],
        np.asarray(normal, dtype=DTYPE)[None, :],
        t,
        opts,
    )
    return float(v[0])


def silhouette_scan(field, origins, dirs, t, t0, t1, n_samples: int):
    """Minimum SDF along each ray segment and where it occurs.

    Sample positions are fixed (midpoint rule over the segment), so the
    argmin point can be treated as a constant while the SDF value at it
    stays differentiable.
    """
    n = origins.shape[0]
    frac = (np.arange(n_samples, dtype=DTYPE) + 0.5) / n_samples
    ds = t0[:, None] + frac[None, :] * (t1 - t0)[:, None]  # (n, S)
    pts = origins[:, None, :] + ds[:, :, None] * dirs[:, None, :]
    vals = field.sdf(pts.reshape(-1, 3), t).reshape(n, n_samples)
    am = np.argmin(vals, axis=1)
    pmin = pts[np.arange(n), am]
    return vals[np.arange(n), am], pmin
