"""Command-line entry point.

Subcommands: ``template fit``, ``template statemap``, ``distill run``,
``render``, ``export-mesh``, ``gradcheck``, ``selfcheck``. Every command
reads one JSON config (``--config``), writes its artifacts under the
output directory, and records them in ``manifest.json`` with checksums so
reruns are verifiable. Exit codes: 0 success, 1 validation failure,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import backend
from . import tape as tp
from .config import ConfigError, JobConfig
from .field import (
    FieldConfig,
    NeuralField,
    init_params,
    load_params,
    save_params,
    read_arrays,
    write_arrays,
)
from .field.params import leaves
from .field.query import sdf_only_batch
from .render.camera import CameraPose, orbit_pose
from .render.envmap import EnvironmentMap, gradient_environment
from .render.image import RenderOpts, render_image, render_with_tape
from .render.imageio import read_pfm, write_pfm, write_png
from .render.mesh import marching_cubes, read_obj, write_obj
from .template import (
    DeformableMeshSequence,
    FitConfig,
    FlowTargets,
    NsmConfig,
    ToyEncoder,
    fit_basis_on_grid,
    fit_deformation,
    flower_proxy_sequence,
    neural_state_map,
    rasterize_flow,
    read_flow,
    render_template,
    textured_sphere_sequence,
)
from .distill import (
    DistillConfig,
    EchoProvider,
    IdentityRefiner,
    RemoteScoreProvider,
    TemporalSmoothRefiner,
    ViewTimeConfig,
    make_analytic_provider,
    make_schedule,
    run_conformance,
    run_distillation,
)


def _field_config(cfg: JobConfig) -> FieldConfig:
    f = cfg["field"]
    return FieldConfig(
        plane_res=f["plane_res"],
        d_low=f["d_low"],
        keyframes=f["keyframes"],
        levels=f["levels"],
        table_log2=f["table_log2"],
        d_level=f["d_level"],
        hash_base_res=f["hash_base_res"],
        hash_growth=f["hash_growth"],
        mlp_hidden=f["mlp_hidden"],
        mlp_layers=f["mlp_layers"],
        sphere_radius_frac=f["sphere_radius_frac"],
        bounds_lo=tuple(f["bounds_lo"]),
        bounds_hi=tuple(f["bounds_hi"]),
    )


def _render_opts(cfg: JobConfig, seed: int) -> RenderOpts:
    r = cfg["renderer"]
    bg = r["background"]
    return RenderOpts(
        samples_per_pixel=r["samples_per_pixel"],
        seed=seed,
        max_steps=r["max_steps"],
        hit_eps_frac=r["hit_eps_frac"],
        normal_h_frac=r["normal_h_frac"],
        shadows=r["shadows"],
        background=bg if bg == "env" else tuple(float(x) for x in bg.split(",")),
        silhouette_samples=r["silhouette_samples"],
        silhouette_softness_frac=r["silhouette_softness_frac"],
    )


def _build_field(cfg: JobConfig, seed: int) -> NeuralField:
    ckpt = cfg["io"]["checkpoint"]
    if ckpt:
        return NeuralField(load_params(ckpt))
    return NeuralField(init_params(_field_config(cfg), seed))


def _build_env(cfg: JobConfig) -> EnvironmentMap:
    path = cfg["io"]["env_map"]
    if path:
        return EnvironmentMap(read_pfm(path))
    return gradient_environment()


def _save_sequence(path, seq: DeformableMeshSequence) -> None:
    write_arrays(
        path,
        {
            "vertices": seq.vertices,
            "faces": seq.faces.astype(np.float64),
            "colors": seq.colors,
            "offsets": seq.offsets,
            "canonical": np.array([seq.canonical_frame], dtype=np.float64),
        },
    )


def _load_sequence(path) -> DeformableMeshSequence:
    a = read_arrays(path)
    return DeformableMeshSequence(
        vertices=a["vertices"].astype(np.float64),
        faces=a["faces"].astype(np.int64),
        colors=a["colors"].astype(np.float64),
        offsets=a["offsets"].astype(np.float64),
        canonical_frame=int(a["canonical"][0]),
    )


def _build_template(cfg: JobConfig) -> DeformableMeshSequence:
    t = cfg["template"]
    if t["sequence"]:
        return _load_sequence(t["sequence"])
    if t["source"] == "procedural_sphere":
        return textured_sphere_sequence(frames=t["frames"])
    if t["source"] == "procedural_flower":
        return flower_proxy_sequence(frames=t["frames"])
    if t["source"] == "file":
        if not t["mesh"]:
            raise ConfigError("template.source=file requires template.mesh")
        mesh = read_obj(t["mesh"])
        colors = mesh.colors if mesh.colors is not None else np.full((len(mesh.vertices), 3), 0.6)
        offsets = np.zeros((t["frames"], len(mesh.vertices), 3))
        return DeformableMeshSequence(mesh.vertices, mesh.faces, colors, offsets, 0)
    raise ConfigError(f"unknown template.source {t['source']!r}")


def _parse_xi(spec: str):
    vals = {"azimuth": 0.0, "elev": 20.0, "radius": None}
    for tok in spec.split(","):
        if not tok:
            continue
        k, _, v = tok.partition("=")
        k = k.strip()
        if k not in vals:
            raise ConfigError(f"unknown --xi key {k!r} (use azimuth=,elev=,radius=)")
        vals[k] = float(v)
    return np.deg2rad(vals["azimuth"]), np.deg2rad(vals["elev"]), vals["radius"]


def _camera_from_xi(cfg: JobConfig, xi: str) -> CameraPose:
    az, el, radius = _parse_xi(xi)
    r = cfg["renderer"]
    return orbit_pose(
        az,
        el,
        radius if radius is not None else cfg["distill"]["radius"],
        fov_y=r["fov_y"],
        width=r["width"],
        height=r["height"],
    )


class Manifest:
    def __init__(self, out_dir: Path, cfg: JobConfig, seed: int):
        self.out_dir = out_dir
        self.data = {
            "config_sha256": cfg.sha256(),
            "seed": seed,
            "backend": backend.active_backend(),
            "artifacts": {},
        }

    def add(self, path: Path):
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        self.data["artifacts"][str(Path(path).relative_to(self.out_dir))] = digest

    def write(self):
        p = self.out_dir / "manifest.json"
        p.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return p


def _out_dir(cfg: JobConfig, args) -> Path:
    out = Path(args.out) if args.out else Path(cfg["io"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_render(cfg: JobConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(cfg, args)
    man = Manifest(out, cfg, seed)
    field = _build_field(cfg, seed)
    env = _build_env(cfg)
    cam = _camera_from_xi(cfg, args.xi)
    t = args.t
    if not 0.0 <= t <= 1.0:
        raise ConfigError("--t must lie in [0, 1]")
    result = render_image(field, cam, t, env, _render_opts(cfg, seed))
    png = out / "rgb.png"
    pfm = out / "rgb.pfm"
    alb = out / "albedo.png"
    write_png(png, result.rgb)
    write_pfm(pfm, result.rgb)
    write_png(alb, result.aovs["albedo"], srgb=False)
    for p in (png, pfm, alb):
        man.add(p)
    man.write()
    print(f"rendered {cam.width}x{cam.height} at t={t}: {png}")
    return 0


def cmd_export_mesh(cfg: JobConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(cfg, args)
    man = Manifest(out, cfg, seed)
    field = _build_field(cfg, seed)
    mesh = marching_cubes(field, args.t, args.resolution)
    path = out / "mesh.obj"
    write_obj(path, mesh)
    man.add(path)
    man.write()
    print(f"exported {len(mesh.vertices)} vertices / {len(mesh.faces)} faces: {path}")
    return 0


def cmd_gradcheck(cfg: JobConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg["seed"]
    fc = _field_config(cfg)
    fc.plane_res = min(fc.plane_res, 32)
    fc.table_log2 = min(fc.table_log2, 13)
    fc.levels = min(fc.levels, 4)
    params = init_params(fc, seed)
    field = NeuralField(params)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.9, 0.9, (10, 3))
    ts = rng.uniform(0, 1, 10)

    def fn(tape_, pv):
        return tp.tsum(sdf_only_batch(params, pts, ts, view=pv))

    err_q = tp.finite_diff_check(fn, leaves(params), probes=args.probes, eps=1e-4, rng=np.random.default_rng(0))
    print(f"field query gradcheck: max relative error {err_q:.3e} (probes={args.probes})")

    env = gradient_environment()
    cam = orbit_pose(0.5, 0.3, 1.9, width=16, height=16)
    opts = RenderOpts(samples_per_pixel=4, seed=seed, shadows=True)
    tape = tp.Tape()
    _, _, replay = render_with_tape(field, cam, 0.5, env, opts, tape)

    def fn_r(tape_, pv):
        return tp.tmean(replay(pv))

    err_r = tp.finite_diff_check(fn_r, leaves(params), probes=min(args.probes, 48), eps=1e-4, rng=np.random.default_rng(1))
    print(f"render gradcheck:      max relative error {err_r:.3e}")
    ok = err_q < 1e-4 and err_r < 1e-3
    print("gradcheck", "PASS" if ok else "FAIL")
    return 0 if ok else 2


def cmd_selfcheck(cfg: JobConfig, args) -> int:
    from .render.brdf import specular_color
    from .template import boundary_coeffs
    from .field import SpaceTimePoint
    from .field.query import plane_feature, hash_feature

    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}: {name}")
        failures += 0 if ok else 1

    fc = FieldConfig(plane_res=16, d_low=4, keyframes=3, levels=2, table_log2=8, d_level=2, hash_base_res=4)
    params = init_params(fc, 1)
    p = SpaceTimePoint(np.array([0.1, -0.2, 0.3]), 0.4)
    params.planes[...] = 1.0
    check("plane Hadamard identity", np.allclose(plane_feature(params, p), 1.0, atol=1e-12))
    params.planes[2] = 0.0
    check("plane Hadamard annihilator", np.all(plane_feature(params, p) == 0.0))
    params = init_params(fc, 1)
    t0, t1 = params.keyframe_times[0], params.keyframe_times[1]
    f0 = hash_feature(params, SpaceTimePoint(p.x, float(t0)))
    f1 = hash_feature(params, SpaceTimePoint(p.x, float(t1)))
    fm = hash_feature(params, SpaceTimePoint(p.x, float((t0 + t1) / 2)))
    check("keyframe lerp midpoint", np.allclose(fm, (f0 + f1) / 2, atol=1e-12))

    check("k_s dielectric endpoint", np.allclose(specular_color(np.array([0.5, 0.5, 0.5]), 0.0), 0.04))
    check("k_s metallic endpoint", np.allclose(specular_color(np.array([0.8, 0.2, 0.1]), 1.0), [0.8, 0.2, 0.1]))

    sched = make_schedule(steps=100)
    vp = [abs(sched.alpha(t) ** 2 + sched.sigma(t) ** 2 - 1.0) for t in range(1, 101)]
    check("schedule variance-preserving identity", max(vp) < 1e-12)
    cs, co = boundary_coeffs(1, sched)
    check("consistency boundary (c_skip=1, c_out=0)", cs == 1.0 and co == 0.0)

    field = NeuralField(init_params(FieldConfig(plane_res=16, table_log2=10, levels=2, keyframes=3, d_low=4, hash_base_res=4), 2))
    env = gradient_environment()
    cam = orbit_pose(0.4, 0.3, 1.9, width=12, height=12)
    o1 = render_image(field, cam, 0.3, env, RenderOpts(samples_per_pixel=2, seed=5))
    o2 = render_image(field, cam, 0.3, env, RenderOpts(samples_per_pixel=2, seed=5))
    check("render determinism", np.array_equal(o1.rgb, o2.rgb))

    if args.provider and args.provider.startswith("external:"):
        addr = args.provider.split(":", 1)[1]
        rep = run_conformance(addr, n_frames=args.frames, seed=3)
        check(f"protocol conformance vs {addr}", rep["ok"])
    else:
        rep = run_conformance(EchoProvider(), n_frames=args.frames, seed=3)
        check("protocol conformance vs in-process echo", rep["ok"])

    print(f"selfcheck: {'all checks passed' if failures == 0 else f'{failures} check(s) failed'}")
    return 0 if failures == 0 else 2


def cmd_template_fit(cfg: JobConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(cfg, args)
    man = Manifest(out, cfg, seed)
    t = cfg["template"]
    seq = _build_template(cfg)
    cam = orbit_pose(
        0.5,
        0.35,
        cfg["distill"]["radius"],
        width=cfg["renderer"]["width"],
        height=cfg["renderer"]["height"],
    )
    if t["flow_targets"]:
        flows, masks = read_flow(t["flow_targets"])
        if flows.shape[0] != seq.frame_count:
            raise ConfigError("flow target frame count does not match template frames")
        targets = FlowTargets(flows, masks)
        init = seq
    else:
        # no measured flow supplied: fit against the template's own motion
        flows, masks = [], []
        for f in range(seq.frame_count):
            fl, mk = rasterize_flow(seq, seq.canonical_frame, f, cam)
            flows.append(fl)
            masks.append(mk)
        targets = FlowTargets(np.stack(flows), np.stack(masks))
        init = DeformableMeshSequence(
            vertices=seq.vertices.copy(),
            faces=seq.faces.copy(),
            colors=seq.colors.copy(),
            offsets=np.zeros_like(seq.offsets),
            canonical_frame=seq.canonical_frame,
        )
    fit, metrics = fit_deformation(
        init,
        targets,
        cam,
        FitConfig(
            iterations=t["fit_iterations"],
            step_size=t["fit_step_size"],
            lambda_arap=t["lambda_arap"],
            lambda_sil=t["lambda_sil"],
        ),
    )
    seq_path = out / "template_seq.i4d"
    _save_sequence(seq_path, fit)
    obj_path = out / "template_canonical.obj"
    from .render.mesh import TriangleMesh

    write_obj(obj_path, TriangleMesh(fit.vertices, fit.faces, colors=fit.colors))
    man.add(seq_path)
    man.add(obj_path)
    man.write()
    loss = metrics["loss"]
    print(f"fit {fit.frame_count} frames: loss {loss[0]:.5f} -> {loss[-1]:.5f}; wrote {seq_path}")
    return 0


def _nsm_setup(cfg: JobConfig, seq: DeformableMeshSequence):
    t = cfg["template"]
    enc = ToyEncoder(t["patch_size"])
    nsm_cfg = NsmConfig(t["nsm_height"], t["nsm_width"], t["d_f"], render_size=t["nsm_render_size"])
    cams = [
        orbit_pose(a, 0.35, cfg["distill"]["radius"])
        for a in np.linspace(0, 2 * np.pi, t["basis_views"] + 1)[:-1]
    ]
    frames = np.linspace(0, seq.frame_count - 1, t["basis_frames"]).round().astype(int)
    basis = fit_basis_on_grid(seq, cams, frames, enc, t["d_f"], render_size=t["nsm_render_size"])
    return enc, nsm_cfg, basis


def cmd_template_statemap(cfg: JobConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(cfg, args)
    man = Manifest(out, cfg, seed)
    seq = _build_template(cfg)
    enc, nsm_cfg, basis = _nsm_setup(cfg, seq)
    cam = _camera_from_xi(cfg, args.xi)
    if not 0.0 <= args.t <= 1.0:
        raise ConfigError("--t must lie in [0, 1]")
    frame = int(round(args.t * (seq.frame_count - 1)))
    nsm = neural_state_map(seq, cam, frame, enc, basis, nsm_cfg)
    grid_path = out / "statemap.i4d"
    write_arrays(grid_path, {"grid": nsm.grid, "frame": np.array([frame], dtype=float)})
    vis = nsm.grid[:, :, :3]
    vis = (vis - vis.min()) / max(vis.max() - vis.min(), 1e-9)
    png_path = out / "statemap.png"
    write_png(png_path, vis, srgb=False)
    man.add(grid_path)
    man.add(png_path)
    man.write()
    print(f"state map {nsm.grid.shape} for frame {frame}: {grid_path}")
    return 0


def cmd_distill_run(cfg: JobConfig, args) -> int:
    seed = args.seed if args.seed is not None else cfg["seed"]
    out = _out_dir(cfg, args)
    man = Manifest(out, cfg, seed)
    d = cfg["distill"]
    field = _build_field(cfg, seed)
    env = _build_env(cfg)
    seq = _build_template(cfg)
    enc, nsm_cfg, basis = _nsm_setup(cfg, seq)

    def tmpl_fn(camera, t):
        frame = int(round(t * (seq.frame_count - 1)))
        return neural_state_map(seq, camera, frame, enc, basis, nsm_cfg).grid

    w, h = cfg["renderer"]["width"], cfg["renderer"]["height"]
    elev_mid = (d["elevation_min"] + d["elevation_max"]) / 2.0
    anchors = None
    if d["use_anchors"]:
        anchors = [
            (az, elev_mid, t)
            for az in np.linspace(0, 2 * np.pi, d["anchor_views"] + 1)[:-1]
            for t in np.linspace(0, 1, d["anchor_times"])
        ]
    view = ViewTimeConfig(
        elevation_range=(d["elevation_min"], d["elevation_max"]),
        radius=d["radius"],
        fov_y=cfg["renderer"]["fov_y"],
        width=w,
        height=h,
        anchors=anchors,
    )

    provider_spec = args.provider or "analytic"
    if provider_spec == "analytic":
        sched = make_schedule(steps=1000)
        pose_list = anchors or [
            (az, elev_mid, t)
            for az in np.linspace(0, 2 * np.pi, d["anchor_views"] + 1)[:-1]
            for t in np.linspace(0, 1, d["anchor_times"])
        ]
        targets = []
        for az, el, t in pose_list:
            cam = orbit_pose(az, el, d["radius"], fov_y=cfg["renderer"]["fov_y"], width=w, height=h)
            frame = int(round(t * (seq.frame_count - 1)))
            img = render_template(seq, cam, frame)
            targets.append((tmpl_fn(cam, t), d["prompt"], img))
        provider = make_analytic_provider(targets, sched)
    elif provider_spec.startswith("external:"):
        provider = RemoteScoreProvider(provider_spec.split(":", 1)[1], timeout=d["provider_timeout"])
    else:
        raise ConfigError(f"unknown provider {provider_spec!r} (use analytic or external:HOST:PORT)")

    refiner = TemporalSmoothRefiner() if d["refiner"] == "smooth" else IdentityRefiner()
    dcfg = DistillConfig(
        iterations=d["iterations"],
        seed=seed,
        lr_grids=d["lr_grids"],
        lr_mlp=d["lr_mlp"],
        tau_range=(d["tau_lo"], d["tau_hi"]),
        weight_kind=d["weight"],
        lambda_vid=d["lambda_vid"],
        vid_cadence=d["vid_cadence"],
        vid_frames=d["vid_frames"],
        prompt=d["prompt"],
        view=view,
        render=_render_opts(cfg, seed),
    )
    metrics_path = out / "metrics.ndjson"
    params, metrics = run_distillation(field, tmpl_fn, provider, refiner, env, dcfg, metrics_path=metrics_path)
    ckpt = out / "final.i4d"
    save_params(params, ckpt)
    man.add(ckpt)
    man.add(metrics_path)
    man.write()
    ok_rows = sum(1 for m in metrics if m["status"] == "ok")
    print(f"distilled {len(metrics)} iterations ({ok_rows} applied): {ckpt}")
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="intrinsics4d", description=__doc__)
    p.add_argument("--config", type=str, default=None, help="JSON job config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", type=str, default=None, help="output directory")
    p.add_argument("--provider", type=str, default=None, help="analytic | external:HOST:PORT")
    sub = p.add_subparsers(dest="command")

    tpl = sub.add_parser("template", help="neural-template commands")
    tsub = tpl.add_subparsers(dest="subcommand")
    tsub.add_parser("fit", help="fit deformation offsets to flow targets")
    sm = tsub.add_parser("statemap", help="extract one neural state map")
    sm.add_argument("--xi", type=str, required=True, help="azimuth=DEG,elev=DEG[,radius=R]")
    sm.add_argument("--t", type=float, required=True, help="timestamp in [0,1]")

    dst = sub.add_parser("distill", help="distillation commands")
    dsub = dst.add_subparsers(dest="subcommand")
    dsub.add_parser("run", help="run the optimization loop")

    rnd = sub.add_parser("render", help="render the field")
    rnd.add_argument("--xi", type=str, required=True)
    rnd.add_argument("--t", type=float, required=True)

    exm = sub.add_parser("export-mesh", help="marching-cubes OBJ export")
    exm.add_argument("--t", type=float, default=0.0)
    exm.add_argument("--resolution", type=int, default=64)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    gc.add_argument("--probes", type=int, default=64)

    sc = sub.add_parser("selfcheck", help="run the invariant suite")
    sc.add_argument("--frames", type=int, default=30, help="conformance fuzz frames")
    return p


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        cfg = JobConfig.load(args.config) if args.config else JobConfig.default()
        if args.command == "render":
            return cmd_render(cfg, args)
        if args.command == "export-mesh":
            return cmd_export_mesh(cfg, args)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, args)
        if args.command == "selfcheck":
            return cmd_selfcheck(cfg, args)
        if args.command == "template":
            if args.subcommand == "fit":
                return cmd_template_fit(cfg, args)
            if args.subcommand == "statemap":
                return cmd_template_statemap(cfg, args)
            parser.error("template needs a subcommand (fit | statemap)")
        if args.command == "distill":
            if args.subcommand == "run":
                return cmd_distill_run(cfg, args)
            parser.error("distill needs a subcommand (run)")
        parser.print_help()
        return 1
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    except Exception as e:
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
