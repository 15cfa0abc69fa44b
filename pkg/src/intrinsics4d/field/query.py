"""Field queries: signed distance and material parameters at (x, t)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .. import backend
from .. import tape as tp
from . import encoding as enc
from .params import Field4DParams, assert_finite, leaves


@dataclass
class SpaceTimePoint:
    x: np.ndarray  # (3,)
    t: float


@dataclass
class FieldSample:
    """Signed distance plus materials at one space-time point. The ``o``
    channel of k_orm is carried but never read by the renderer."""

    sdf: float
    k_d: np.ndarray  # (3,) in [0, 1]
    k_orm: np.ndarray  # (o, r, m) in [0, 1]


def _view_or_params(params: Field4DParams, view):
    return leaves(params) if view is None else view


def features_batch(params: Field4DParams, pts, ts, view=None):
    """Concatenated low/high frequency features, (N, d_feature)."""
    v = _view_or_params(params, view)
    u4, clamped = enc.normalize_coords(pts, ts, params.bounds_lo, params.bounds_hi)
    f_low = enc.plane_features(v["planes"], u4)
    f_high = enc.hash_features(
        v["hash"], params.keyframe_times, params.config.level_resolutions(), u4
    )
    return tp.concat([f_low, f_high], axis=1), clamped


def query_batch(params: Field4DParams, pts, ts, view=None):
    """Batched field query. With a Tensor ``view`` the results are recorded
    on its tape; with ``view=None`` everything stays plain numpy.

    Returns (sdf (N,), k_d (N,3), k_orm (N,3), clamped_count).
    """
    v = _view_or_params(params, view)
    pts = np.atleast_2d(np.asarray(pts, dtype=tp.DTYPE))
    f4d, clamped = features_batch(params, pts, ts, view=v)

    n_layers = len(params.sdf_weights) - 1
    sw = [v[f"sdf.W{i}"] for i in range(n_layers + 1)]
    sb = [v[f"sdf.b{i}"] for i in range(n_layers + 1)]
    mw = [v[f"mat.W{i}"] for i in range(n_layers + 1)]
    mb = [v[f"mat.b{i}"] for i in range(n_layers + 1)]

    sdf_in = tp.concat([f4d, pts], axis=1)
    correction = tp.getitem(enc.mlp_forward(sw, sb, sdf_in), (slice(None), 0))
    skip = (
        np.sqrt(np.sum((pts - params.center) ** 2, axis=1) + 1e-12) - params.sphere_radius
    )
    sdf = tp.add(correction, skip)

    mat = tp.sigmoid(enc.mlp_forward(mw, mb, f4d))
    k_d = tp.getitem(mat, (slice(None), slice(0, 3)))
    k_orm = tp.getitem(mat, (slice(None), slice(3, 6)))
    return sdf, k_d, k_orm, clamped


def sdf_only_batch(params: Field4DParams, pts, ts, view=None):
    """Signed distance only, sharing the tape-aware path."""
    v = _view_or_params(params, view)
    pts = np.atleast_2d(np.asarray(pts, dtype=tp.DTYPE))
    f4d, _ = features_batch(params, pts, ts, view=v)
    n_layers = len(params.sdf_weights) - 1
    sw = [v[f"sdf.W{i}"] for i in range(n_layers + 1)]
    sb = [v[f"sdf.b{i}"] for i in range(n_layers + 1)]
    sdf_in = tp.concat([f4d, pts], axis=1)
    correction = tp.getitem(enc.mlp_forward(sw, sb, sdf_in), (slice(None), 0))
    skip = (
        np.sqrt(np.sum((pts - params.center) ** 2, axis=1) + 1e-12) - params.sphere_radius
    )
    return tp.add(correction, skip)


def sdf_batch(params: Field4DParams, pts, ts) -> np.ndarray:
    """Fast signed-distance evaluation on the active backend."""
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(pts, dtype=tp.DTYPE)))
    ts = np.ascontiguousarray(
        np.broadcast_to(np.asarray(ts, dtype=tp.DTYPE), (pts.shape[0],))
    )
    if backend.USE_NUMBA and len(params.sdf_weights) == 3:
        return enc.sdf_kernel(
            pts,
            ts,
            params.planes,
            params.hash_tables,
            params.keyframe_times,
            params.config.level_resolutions(),
            params.bounds_lo,
            params.bounds_hi,
            params.sphere_radius,
            params.sdf_weights[0],
            params.sdf_biases[0],
            params.sdf_weights[1],
            params.sdf_biases[1],
            params.sdf_weights[2],
            params.sdf_biases[2],
        )
    return np.asarray(sdf_only_batch(params, pts, ts))


# ---------------------------------------------------------------------------
# public single-point API


def plane_feature(params: Field4DParams, p: SpaceTimePoint) -> np.ndarray:
    """Hadamard-fused feature of the six planes at one point, (d_low,)."""
    u4, clamped = enc.normalize_coords(
        p.x[None, :], np.asarray([p.t]), params.bounds_lo, params.bounds_hi
    )
    if clamped:
        warnings.warn("query outside the scene bounds was clamped", RuntimeWarning)
    return np.asarray(enc.plane_features(params.planes, u4))[0]


def hash_feature(params: Field4DParams, p: SpaceTimePoint) -> np.ndarray:
    """Keyframe-interpolated hash feature at one point, (L*d_level,)."""
    u4, clamped = enc.normalize_coords(
        p.x[None, :], np.asarray([p.t]), params.bounds_lo, params.bounds_hi
    )
    if clamped:
        warnings.warn("query outside the scene bounds was clamped", RuntimeWarning)
    return np.asarray(
        enc.hash_features(
            params.hash_tables,
            params.keyframe_times,
            params.config.level_resolutions(),
            u4,
        )
    )[0]


def query_field(params: Field4DParams, p: SpaceTimePoint) -> FieldSample:
    """Full sample at one point. Raises if any parameter array is non-finite."""
    assert_finite(params)
    sdf, k_d, k_orm, clamped = query_batch(params, p.x[None, :], np.asarray([p.t]))
    if clamped:
        warnings.warn("query outside the scene bounds was clamped", RuntimeWarning)
    return FieldSample(sdf=float(sdf[0]), k_d=np.asarray(k_d[0]), k_orm=np.asarray(k_orm[0]))


class NeuralField:
    """Field protocol adapter around Field4DParams.

    The renderer and distillation loop only touch fields through this
    surface: ``bounds``, fast ``sdf``, and tape-aware ``query``.
    """

    def __init__(self, params: Field4DParams):
        self.params = params

    @property
    def bounds(self):
        return self.params.bounds_lo, self.params.bounds_hi

    def leaves(self) -> dict[str, np.ndarray]:
        return leaves(self.params)

    def sdf(self, pts, ts) -> np.ndarray:
        return sdf_batch(self.params, pts, ts)

    def sdf_diff(self, pts, ts, view=None):
        return sdf_only_batch(self.params, pts, ts, view=view)

    def query(self, pts, ts, view=None):
        sdf, k_d, k_orm, _ = query_batch(self.params, pts, ts, view=view)
        return sdf, k_d, k_orm
