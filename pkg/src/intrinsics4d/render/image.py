"""Full-image differentiable rendering.

Rendering splits into a frozen geometric pass and a differentiable replay.
The frozen pass sphere-traces the pixel rays, scans each ray segment for
its minimum-SDF point (the soft-silhouette anchor), draws all per-pixel
uniforms from a counter-based generator, and resolves binary shadow rays.
The replay then recomputes, as tape operations: stencil normals, material
queries, BRDF sampling, environment lookups, and the silhouette alpha.

Hit positions, sample selection masks, and visibility bits stay constant
in the replay, so the recorded gradient flows through materials, normals,
and shading but not through the intersection itself. Replaying with
perturbed parameters is exactly what central finite differences probe,
which keeps render-level gradient checks well-posed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .. import tape as tp
from ..tape import DTYPE
from . import brdf
from .camera import CameraPose, ray_grid
from .envmap import EnvironmentMap
from .trace import TraceOpts, ray_aabb, extent_of, sphere_trace_batch, sdf_normals, silhouette_scan, visibility_batch


@dataclass
class RenderOpts:
    samples_per_pixel: int = 16
    seed: int = 0
    max_steps: int = 128
    hit_eps_frac: float = 1e-3
    normal_h_frac: float = 1e-3
    shadows: bool = True
    background: object = "env"  # "env" or an RGB triple
    silhouette_samples: int = 32
    silhouette_softness_frac: float = 0.004

    def trace_opts(self) -> TraceOpts:
        return TraceOpts(
            max_steps=self.max_steps,
            hit_eps_frac=self.hit_eps_frac,
            normal_h_frac=self.normal_h_frac,
        )


@dataclass
class RenderOutput:
    rgb: np.ndarray  # (H, W, 3) linear radiance
    aovs: dict = dc_field(default_factory=dict)


def _split_spp(n: int):
    if n < 1:
        raise ValueError("samples_per_pixel must be >= 1")
    n_d = (n + 1) // 2
    return n_d, n - n_d


def _freeze(field, camera: CameraPose, t: float, env: EnvironmentMap, opts: RenderOpts):
    camera.validate()
    h, w = camera.height, camera.width
    origins, dirs = ray_grid(camera)
    lo, hi = field.bounds
    t_enter, t_exit, inters = ray_aabb(origins, dirs, np.asarray(lo), np.asarray(hi))
    idx_box = np.flatnonzero(inters)
    ext = extent_of(field)
    topts = opts.trace_opts()

    fz = {
        "h": h,
        "w": w,
        "origins": origins,
        "dirs": dirs,
        "idx_box": idx_box,
        "extent": ext,
        "t": t,
    }

    if opts.background == "env":
        fz["bg_image"] = np.asarray(env.sample(dirs))
    else:
        fz["bg_image"] = np.broadcast_to(
            np.asarray(opts.background, dtype=DTYPE), (h * w, 3)
        ).copy()
    fz["mean_env"] = env.mean_radiance()

    if len(idx_box) == 0:
        fz["idx_hit_local"] = np.zeros(0, dtype=np.int64)
        return fz

    ob, db = origins[idx_box], dirs[idx_box]
    pos, dist, hitm = sphere_trace_batch(field, ob, db, t, topts)
    _, sil_pts = silhouette_scan(
        field, ob, db, t, t_enter[idx_box], t_exit[idx_box], opts.silhouette_samples
    )
    idx_hit_local = np.flatnonzero(hitm)
    hit_pos = pos[idx_hit_local]
    hit_dirs = db[idx_hit_local]
    fz.update(
        sil_pts=sil_pts,
        idx_hit_local=idx_hit_local,
        idx_near_local=np.flatnonzero(~hitm),
        hit_pos=hit_pos,
        hit_dirs=hit_dirs,
    )

    n_hit = len(idx_hit_local)
    if n_hit == 0:
        return fz

    # raw normals decide the viewer-facing flip once; the replay reuses it
    hn = opts.normal_h_frac * ext
    n_raw = sdf_normals(field, hit_pos, t, hn)
    flip = np.sum(n_raw * hit_dirs, axis=1) > 0
    n_raw = np.where(flip[:, None], -n_raw, n_raw)
    fz["normal_flip"] = flip
    fz["stencil_h"] = hn

    # per-pixel sample streams, drawn for the full image so pixel index alone
    # fixes each stream
    s_d, s_s = _split_spp(opts.samples_per_pixel)
    gen = np.random.Generator(np.random.Philox(opts.seed))
    u = gen.random((h * w, opts.samples_per_pixel, 2))
    u_hit = u[idx_box[idx_hit_local]]
    fz["u_d"] = u_hit[:, :s_d, :]
    fz["u_s"] = u_hit[:, s_d:, :]

    # raw material/sampling pass fixes shadow-ray directions
    _, kd_raw, korm_raw = field.query(hit_pos, t)
    wo = -hit_dirs
    wi_d, wi_s, _ = _sample_all_dirs(kd_raw, korm_raw, n_raw, wo, fz["u_d"], fz["u_s"])
    if opts.shadows:
        vis = []
        for wi in (wi_d, wi_s):
            if wi.shape[1] == 0:
                vis.append(np.ones(wi.shape[:2], dtype=DTYPE))
                continue
            s = wi.shape[1]
            pts_rep = np.repeat(hit_pos, s, axis=0)
            n_rep = np.repeat(n_raw, s, axis=0)
            v = visibility_batch(field, pts_rep, wi.reshape(-1, 3), n_rep, t, topts)
            vis.append(v.reshape(-1, s))
        fz["vis_d"], fz["vis_s"] = vis
    else:
        fz["vis_d"] = np.ones(wi_d.shape[:2], dtype=DTYPE)
        fz["vis_s"] = np.ones(wi_s.shape[:2], dtype=DTYPE)
    return fz


def _expand1(v):
    return (
        tp.reshape(v, tp.value_of(v).shape + (1,))
        if isinstance(v, tp.Tensor)
        else np.asarray(v)[..., None]
    )


def _sample_all_dirs(kd, korm, n, wo, u_d, u_s):
    """Diffuse and specular sample directions for each point (tape-aware)."""
    t_, b_ = brdf.build_frame(n)
    te, be, ne = _expand_mid(t_), _expand_mid(b_), _expand_mid(n)
    wi_d, _ = brdf.sample_cosine(te, be, ne, u_d[..., 0], u_d[..., 1])
    r = tp.getitem(korm, (Ellipsis, slice(1, 2)))
    alpha = brdf.ggx_alpha(r)
    woe = _expand_mid(wo)
    wi_s, voh, noh = brdf.sample_ggx(te, be, ne, woe, alpha, u_s[..., 0], u_s[..., 1])
    return wi_d, wi_s, (voh, noh, woe, ne, alpha)


def _expand_mid(v):
    """(N, 3) -> (N, 1, 3) for broadcasting over the sample axis."""
    if isinstance(v, tp.Tensor):
        n = v.value.shape[0]
        return tp.reshape(v, (n, 1, 3))
    v = np.asarray(v)
    return v.reshape(v.shape[0], 1, 3)


def shade_points(kd, korm, n, wo, env: EnvironmentMap, u_d, u_s, vis_d, vis_s, stats=None):
    """Monte Carlo shading estimate for a batch of surface points.

    Cosine samples handle the energy-compensated diffuse lobe; GGX
    half-vector samples handle the specular lobe. Below-horizon specular
    directions are skipped (contribute zero) but stay in the sample count.
    """
    m = tp.getitem(korm, (Ellipsis, slice(2, 3)))
    r = tp.getitem(korm, (Ellipsis, slice(1, 2)))
    f0 = brdf.specular_color(kd, m)
    nov = tp.maximum(tp.dot(n, wo, keepdims=True), 1e-6)
    e_spec = brdf.spec_albedo_lookup(nov, r, f0)

    wi_d, wi_s, (voh, noh, woe, ne, alpha) = _sample_all_dirs(kd, korm, n, wo, u_d, u_s)

    parts = []
    if u_d.shape[1] > 0:
        ld = env.sample(wi_d)
        kdiff = tp.mul(tp.mul(tp.sub(1.0, m), tp.sub(1.0, e_spec)), kd)  # (N, 3)
        per = tp.mul(ld, _expand1(vis_d))
        parts.append(tp.mul(tp.tmean(per, axis=1), kdiff))
    if u_s.shape[1] > 0:
        nol = tp.dot(ne, wi_s)
        mask = (tp.value_of(nol) > 1e-6) & (tp.value_of(voh) > 1e-6) & (tp.value_of(noh) > 1e-6)
        if stats is not None:
            stats["skipped"] = int(np.sum(~mask))
        nol_c = tp.maximum(nol, 1e-6)
        noh_c = tp.maximum(noh, 1e-6)
        g = tp.mul(brdf.smith_g1(nol_c, alpha), brdf.smith_g1(tp.maximum(tp.dot(ne, woe), 1e-6), alpha))
        w = tp.div(tp.mul(g, voh), tp.mul(nov, noh_c))  # nov (N,1) broadcasts over samples
        w = tp.select(mask, tp.mul(w, vis_s), 0.0)
        fr = brdf.fresnel_schlick(_expand1(voh), _expand_mid(f0))
        ls = env.sample(wi_s)
        per = tp.mul(tp.mul(ls, fr), _expand1(w))
        parts.append(tp.tmean(per, axis=1))
    out = parts[0]
    for p in parts[1:]:
        out = tp.add(out, p)
    return out


def shade(hit, sample, env: EnvironmentMap, omega_o, rng, n_samples: int, visibility_fn=None, stats=None):
    """Shade one surface point; the per-point core of the renderer.

    ``visibility_fn(points, dirs) -> {0,1}`` supplies shadowing; None means
    fully visible.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    s_d, s_s = _split_spp(n_samples)
    u = rng.random((1, n_samples, 2))
    u_d, u_s = u[:, :s_d, :], u[:, s_d:, :]
    kd = np.asarray(sample.k_d, dtype=DTYPE)[None, :]
    korm = np.asarray(sample.k_orm, dtype=DTYPE)[None, :]
    n = np.asarray(hit.normal, dtype=DTYPE)[None, :]
    wo = np.asarray(omega_o, dtype=DTYPE)[None, :]
    wi_d, wi_s, _ = _sample_all_dirs(kd, korm, n, wo, u_d, u_s)
    if visibility_fn is None:
        vis_d = np.ones((1, s_d), dtype=DTYPE)
        vis_s = np.ones((1, s_s), dtype=DTYPE)
    else:
        pos = np.asarray(hit.position, dtype=DTYPE)
        vis_d = visibility_fn(np.repeat(pos[None, :], s_d, axis=0), wi_d.reshape(-1, 3)).reshape(1, s_d)
        vis_s = visibility_fn(np.repeat(pos[None, :], s_s, axis=0), wi_s.reshape(-1, 3)).reshape(1, s_s)
    rgb = shade_points(kd, korm, n, wo, env, u_d, u_s, vis_d, vis_s, stats=stats)
    return np.asarray(rgb)[0]


def _replay(field, fz, env: EnvironmentMap, opts: RenderOpts, view):
    """Differentiable (or plain) shading from the frozen geometry."""
    idx_box = fz["idx_box"]
    if len(idx_box) == 0:
        return fz["bg_image"].copy(), {}

    t = fz["t"]
    sil_sdf = field.sdf_diff(fz["sil_pts"], t, view=view)
    s_soft = opts.silhouette_softness_frac * fz["extent"]
    alpha = tp.sigmoid(tp.div(tp.neg(sil_sdf), s_soft))

    n_box = len(idx_box)
    c_box = np.zeros((n_box, 3), dtype=DTYPE)
    aux: dict = {}

    idx_near = fz["idx_near_local"]
    if len(idx_near) > 0:
        _, kd_near, _ = field.query(fz["sil_pts"][idx_near], t, view=view)
        c_near = tp.mul(kd_near, fz["mean_env"])
        c_box = tp.overlay(c_box, idx_near, c_near)

    idx_hit = fz["idx_hit_local"]
    if len(idx_hit) > 0:
        hp = fz["hit_pos"]
        hn = fz["stencil_h"]
        offs = np.zeros((6, 3), dtype=DTYPE)
        offs[0, 0], offs[1, 0] = hn, -hn
        offs[2, 1], offs[3, 1] = hn, -hn
        offs[4, 2], offs[5, 2] = hn, -hn
        probe = (hp[None, :, :] + offs[:, None, :]).reshape(-1, 3)
        sv = field.sdf_diff(probe, t, view=view)
        sv = tp.reshape(sv, (6, len(idx_hit)))
        g = tp.stack(
            [
                tp.sub(tp.getitem(sv, 0), tp.getitem(sv, 1)),
                tp.sub(tp.getitem(sv, 2), tp.getitem(sv, 3)),
                tp.sub(tp.getitem(sv, 4), tp.getitem(sv, 5)),
            ],
            axis=1,
        )
        nrm = tp.normalize(g)
        nrm = tp.select(fz["normal_flip"][:, None], tp.neg(nrm), nrm)

        _, kd, korm = field.query(hp, t, view=view)
        wo = -fz["hit_dirs"]
        est = shade_points(kd, korm, nrm, wo, env, fz["u_d"], fz["u_s"], fz["vis_d"], fz["vis_s"])
        c_box = tp.overlay(c_box, idx_hit, est)

        aux["albedo"] = np.asarray(tp.value_of(kd))
        aux["korm"] = np.asarray(tp.value_of(korm))
        aux["normal"] = np.asarray(tp.value_of(nrm))
        vis_all = np.concatenate([fz["vis_d"], fz["vis_s"]], axis=1)
        aux["visibility"] = vis_all.mean(axis=1)

    a1 = _expand1(alpha)
    bg_box = fz["bg_image"][idx_box]
    rgb_box = tp.add(tp.mul(a1, c_box), tp.mul(tp.sub(1.0, a1), bg_box))
    image = tp.overlay(fz["bg_image"], idx_box, rgb_box)
    aux["alpha"] = np.asarray(tp.value_of(alpha))
    return image, aux


def _assemble(fz, image_value: np.ndarray, aux: dict) -> RenderOutput:
    h, w = fz["h"], fz["w"]
    rgb = image_value.reshape(h, w, 3)
    if not np.all(np.isfinite(rgb)):
        raise FloatingPointError("render produced non-finite radiance")
    hw = h * w
    albedo = np.zeros((hw, 3), dtype=DTYPE)
    roughness = np.zeros((hw, 1), dtype=DTYPE)
    metallic = np.zeros((hw, 1), dtype=DTYPE)
    normal = np.zeros((hw, 3), dtype=DTYPE)
    vis_map = np.zeros((hw, 1), dtype=DTYPE)
    alpha_map = np.zeros((hw, 1), dtype=DTYPE)
    idx_box = fz["idx_box"]
    if len(idx_box) and "alpha" in aux:
        alpha_map[idx_box, 0] = aux["alpha"]
    if len(idx_box) and len(fz["idx_hit_local"]) and "albedo" in aux:
        gidx = idx_box[fz["idx_hit_local"]]
        albedo[gidx] = aux["albedo"]
        roughness[gidx, 0] = aux["korm"][:, 1]
        metallic[gidx, 0] = aux["korm"][:, 2]
        normal[gidx] = aux["normal"]
        vis_map[gidx, 0] = aux["visibility"]
    aovs = {
        "albedo": albedo.reshape(h, w, 3),
        "roughness": roughness.reshape(h, w, 1),
        "metallic": metallic.reshape(h, w, 1),
        "normal": normal.reshape(h, w, 3),
        "visibility": vis_map.reshape(h, w, 1),
        "alpha": alpha_map.reshape(h, w, 1),
    }
    return RenderOutput(rgb=rgb, aovs=aovs)


def render_image(field, camera: CameraPose, t: float, env: EnvironmentMap, opts: RenderOpts | None = None) -> RenderOutput:
    """Deterministic forward render (no gradients)."""
    opts = opts or RenderOpts()
    fz = _freeze(field, camera, t, env, opts)
    image, aux = _replay(field, fz, env, opts, view=None)
    return _assemble(fz, np.asarray(image), aux)


def render_with_tape(field, camera: CameraPose, t: float, env: EnvironmentMap, opts: RenderOpts, tape: tp.Tape):
    """Render once, recording shading on ``tape``.

    Returns (RenderOutput, image Tensor (H*W, 3), replay) where
    ``replay(view)`` rebuilds the image from the same frozen geometry under
    a different parameter view (as finite differencing requires).
    """
    opts = opts or RenderOpts()
    fz = _freeze(field, camera, t, env, opts)

    def replay(view):
        img, _ = _replay(field, fz, env, opts, view=view)
        return img

    view = {k: tape.leaf(v, k) for k, v in field.leaves().items()}
    image, aux = _replay(field, fz, env, opts, view=view)
    if not isinstance(image, tp.Tensor):
        image = tape.constant(image)
    out = _assemble(fz, np.asarray(tp.value_of(image)), aux)
    return out, image, replay
