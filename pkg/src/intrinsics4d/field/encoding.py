"""Feature encodings: six factorized planes plus keyframed hash grids.

Two implementations live here. The tape-aware path is built from vectorized
``tape`` ops and accepts either Tensors (for gradients) or plain ndarrays
(the pure-numpy fast path). The numba kernel computes signed distance only
and is used by the geometry-heavy consumers (sphere tracing, shadow rays,
isosurface extraction) where per-call overhead dominates.
"""

from __future__ import annotations

import math

import numpy as np

from ..backend import njit
from .. import tape as tp
from .config import HASH_PRIMES, PLANE_PAIRS

_P1, _P2, _P3 = HASH_PRIMES


def normalize_coords(pts: np.ndarray, ts: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Map (x, t) into the unit 4-cube, clamping out-of-bounds queries.

    Returns the normalized coordinates and how many inputs were clamped.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=tp.DTYPE))
    ts = np.broadcast_to(np.asarray(ts, dtype=tp.DTYPE), (pts.shape[0],))
    u = (pts - lo) / (hi - lo)
    u4 = np.concatenate([u, ts[:, None]], axis=1)
    clamped = int(np.sum(np.any((u4 < 0.0) | (u4 > 1.0), axis=1)))
    return np.clip(u4, 0.0, 1.0), clamped


def plane_features(planes, u4: np.ndarray):
    """Hadamard product over the six bilinearly interpolated planes.

    ``planes`` is the (6, R, R, d) array or Tensor; returns (N, d).
    """
    R = tp.value_of(planes).shape[1]
    d = tp.value_of(planes).shape[3]
    n = u4.shape[0]
    flat = tp.reshape(planes, (6 * R * R, d))

    idx = np.empty((6, 4, n), dtype=np.int64)
    w = np.empty((6, 4, n), dtype=tp.DTYPE)
    for c, (i, j) in enumerate(PLANE_PAIRS):
        ga = u4[:, i] * (R - 1)
        gb = u4[:, j] * (R - 1)
        ia = np.clip(np.floor(ga).astype(np.int64), 0, R - 2)
        ib = np.clip(np.floor(gb).astype(np.int64), 0, R - 2)
        fa, fb = ga - ia, gb - ib
        base = c * R * R
        idx[c, 0] = base + ia * R + ib
        idx[c, 1] = base + ia * R + ib + 1
        idx[c, 2] = base + (ia + 1) * R + ib
        idx[c, 3] = base + (ia + 1) * R + ib + 1
        w[c, 0] = (1 - fa) * (1 - fb)
        w[c, 1] = (1 - fa) * fb
        w[c, 2] = fa * (1 - fb)
        w[c, 3] = fa * fb

    rows = tp.take_rows(flat, idx.reshape(-1))  # (6*4*n, d)
    rows = tp.reshape(rows, (6, 4, n, d))
    psi = tp.tsum(tp.mul(rows, w[..., None]), axis=1)  # (6, n, d)
    out = tp.getitem(psi, 0)
    for c in range(1, 6):
        out = tp.mul(out, tp.getitem(psi, c))
    return out


def keyframe_interval(kf_times: np.ndarray, ts: np.ndarray):
    """Locate the bracketing keyframes: index i and blend s in [0, 1]."""
    ts = np.asarray(ts, dtype=tp.DTYPE)
    i = np.searchsorted(kf_times, ts, side="right") - 1
    i = np.clip(i, 0, len(kf_times) - 2)
    s = (ts - kf_times[i]) / (kf_times[i + 1] - kf_times[i])
    return i, np.clip(s, 0.0, 1.0)


def _hash_index(cx, cy, cz, table_size: int):
    return ((cx * _P1) ^ (cy * _P2) ^ (cz * _P3)) % table_size


def hash_features(hash_tables, kf_times: np.ndarray, level_res: np.ndarray, u4: np.ndarray):
    """Keyframe-interpolated multiresolution hash features, (N, L*d)."""
    K, L, T, d = tp.value_of(hash_tables).shape
    n = u4.shape[0]
    ki, s = keyframe_interval(kf_times, u4[:, 3])
    flat = tp.reshape(hash_tables, (K * L * T, d))

    idx = np.empty((2, L, 8, n), dtype=np.int64)
    w = np.empty((L, 8, n), dtype=tp.DTYPE)
    for lv in range(L):
        nl = int(level_res[lv])
        g = u4[:, :3] * nl
        i0 = np.clip(np.floor(g).astype(np.int64), 0, nl - 1)
        f = g - i0
        for corner in range(8):
            ox, oy, oz = corner & 1, (corner >> 1) & 1, (corner >> 2) & 1
            h = _hash_index(i0[:, 0] + ox, i0[:, 1] + oy, i0[:, 2] + oz, T)
            wx = f[:, 0] if ox else 1.0 - f[:, 0]
            wy = f[:, 1] if oy else 1.0 - f[:, 1]
            wz = f[:, 2] if oz else 1.0 - f[:, 2]
            w[lv, corner] = wx * wy * wz
            idx[0, lv, corner] = (ki * L + lv) * T + h
            idx[1, lv, corner] = ((ki + 1) * L + lv) * T + h

    rows = tp.take_rows(flat, idx.reshape(-1))  # (2*L*8*n, d)
    rows = tp.reshape(rows, (2, L, 8, n, d))
    per_kf = tp.tsum(tp.mul(rows, w[None, ..., None]), axis=2)  # (2, L, n, d)
    lo = tp.getitem(per_kf, 0)
    hi = tp.getitem(per_kf, 1)
    lerped = tp.add(tp.mul(lo, (1.0 - s)[None, :, None]), tp.mul(hi, s[None, :, None]))
    return tp.reshape(tp.transpose(lerped, (1, 0, 2)), (n, L * d))


def mlp_forward(weights, biases, x):
    """tanh MLP; final layer linear."""
    h = x
    for i in range(len(weights) - 1):
        h = tp.tanh(tp.add(tp.matmul(h, weights[i]), biases[i]))
    return tp.add(tp.matmul(h, weights[-1]), biases[-1])


# ---------------------------------------------------------------------------
# numba kernel: signed distance for a batch of points, fixed 2-hidden-layer MLP


@njit(cache=True)
def sdf_kernel(pts, ts, planes, htab, kf, res, lo, hi, r0, W0, b0, W1, b1, W2, b2):  # pragma: no cover - exercised via dispatch tests
    N = pts.shape[0]
    R = planes.shape[1]
    dl = planes.shape[3]
    K = htab.shape[0]
    L = htab.shape[1]
    T = htab.shape[2]
    dh = htab.shape[3]
    F = dl + L * dh + 3
    H0 = W0.shape[1]
    H1 = W1.shape[1]
    out = np.empty(N)
    feat = np.empty(F)
    a0 = np.empty(H0)
    a1 = np.empty(H1)
    u = np.empty(4)
    for n in range(N):
        for a in range(3):
            v = (pts[n, a] - lo[a]) / (hi[a] - lo[a])
            if v < 0.0:
                v = 0.0
            elif v > 1.0:
                v = 1.0
            u[a] = v
        v = ts[n]
        if v < 0.0:
            v = 0.0
        elif v > 1.0:
            v = 1.0
        u[3] = v

        for d in range(dl):
            feat[d] = 1.0
        for c in range(6):
            if c == 0:
                i_, j_ = 0, 1
            elif c == 1:
                i_, j_ = 0, 2
            elif c == 2:
                i_, j_ = 1, 2
            elif c == 3:
                i_, j_ = 0, 3
            elif c == 4:
                i_, j_ = 1, 3
            else:
                i_, j_ = 2, 3
            ga = u[i_] * (R - 1)
            gb = u[j_] * (R - 1)
            ia = int(ga)
            ib = int(gb)
            if ia > R - 2:
                ia = R - 2
            if ib > R - 2:
                ib = R - 2
            fa = ga - ia
            fb = gb - ib
            w00 = (1.0 - fa) * (1.0 - fb)
            w01 = (1.0 - fa) * fb
            w10 = fa * (1.0 - fb)
            w11 = fa * fb
            for d in range(dl):
                feat[d] *= (
                    w00 * planes[c, ia, ib, d]
                    + w01 * planes[c, ia, ib + 1, d]
                    + w10 * planes[c, ia + 1, ib, d]
                    + w11 * planes[c, ia + 1, ib + 1, d]
                )

        ki = K - 2
        for k in range(K - 1):
            if u[3] < kf[k + 1]:
                ki = k
                break
        s = (u[3] - kf[ki]) / (kf[ki + 1] - kf[ki])
        if s < 0.0:
            s = 0.0
        elif s > 1.0:
            s = 1.0

        pos = dl
        for lv in range(L):
            nl = res[lv]
            gx = u[0] * nl
            gy = u[1] * nl
            gz = u[2] * nl
            ix = int(gx)
            iy = int(gy)
            iz = int(gz)
            if ix > nl - 1:
                ix = nl - 1
            if iy > nl - 1:
                iy = nl - 1
            if iz > nl - 1:
                iz = nl - 1
            fx = gx - ix
            fy = gy - iy
            fz = gz - iz
            for d in range(dh):
                acc0 = 0.0
                acc1 = 0.0
                for corner in range(8):
                    ox = corner & 1
                    oy = (corner >> 1) & 1
                    oz = (corner >> 2) & 1
                    wx = fx if ox == 1 else 1.0 - fx
                    wy = fy if oy == 1 else 1.0 - fy
                    wz = fz if oz == 1 else 1.0 - fz
                    hidx = (
                        ((ix + ox) * _P1) ^ ((iy + oy) * _P2) ^ ((iz + oz) * _P3)
                    ) % T
                    wgt = wx * wy * wz
                    acc0 += wgt * htab[ki, lv, hidx, d]
                    acc1 += wgt * htab[ki + 1, lv, hidx, d]
                feat[pos + d] = (1.0 - s) * acc0 + s * acc1
            pos += dh

        feat[pos] = pts[n, 0]
        feat[pos + 1] = pts[n, 1]
        feat[pos + 2] = pts[n, 2]

        for j in range(H0):
            acc = b0[j]
            for i2 in range(F):
                acc += feat[i2] * W0[i2, j]
            a0[j] = math.tanh(acc)
        for j in range(H1):
            acc = b1[j]
            for i2 in range(H0):
                acc += a0[i2] * W1[i2, j]
            a1[j] = math.tanh(acc)
        acc = b2[0]
        for i2 in range(H1):
            acc += a1[i2] * W2[i2, 0]

        cx = (lo[0] + hi[0]) * 0.5
        cy = (lo[1] + hi[1]) * 0.5
        cz = (lo[2] + hi[2]) * 0.5
        dx = pts[n, 0] - cx
        dy = pts[n, 1] - cy
        dz = pts[n, 2] - cz
        out[n] = math.sqrt(dx * dx + dy * dy + dz * dz + 1e-12) - r0 + acc
    return out
