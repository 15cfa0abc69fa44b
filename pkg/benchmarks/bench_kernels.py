"""Timing comparison of the numba kernels against their numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--repeats N]

Times three hot paths on both backends regardless of the env-selected
default: batched signed-distance evaluation (drives sphere tracing and
shadow rays), triangle rasterization, and marching-cubes cell extraction.
"""

import argparse
import time

import numpy as np

from intrinsics4d import backend
from intrinsics4d.field import FieldConfig, init_params
from intrinsics4d.field import encoding as enc
from intrinsics4d.field.query import sdf_only_batch
from intrinsics4d.render.analytic import sphere_field
from intrinsics4d.render import mesh as mesh_mod
from intrinsics4d.render.camera import look_at
from intrinsics4d.template import textured_sphere_sequence
from intrinsics4d.template import raster as raster_mod
from intrinsics4d.template.raster import project


def timeit(fn, repeats):
    fn()  # warm-up (and numba compilation)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_sdf(repeats):
    cfg = FieldConfig(table_log2=13)
    params = init_params(cfg, 0)
    rng = np.random.default_rng(1)
    pts = np.ascontiguousarray(rng.uniform(-1, 1, (20000, 3)))
    ts = np.ascontiguousarray(rng.uniform(0, 1, 20000))

    def run_numba():
        enc.sdf_kernel(
            pts, ts, params.planes, params.hash_tables, params.keyframe_times,
            cfg.level_resolutions(), params.bounds_lo, params.bounds_hi,
            params.sphere_radius,
            params.sdf_weights[0], params.sdf_biases[0],
            params.sdf_weights[1], params.sdf_biases[1],
            params.sdf_weights[2], params.sdf_biases[2],
        )

    def run_numpy():
        sdf_only_batch(params, pts, ts)

    rows = [("sdf 20k pts", run_numba if backend.HAVE_NUMBA else None, run_numpy)]
    return rows


def bench_raster(repeats):
    seq = textured_sphere_sequence(frames=2, n_lat=24, n_lon=36)
    cam = look_at((0, 0.2, 1.7), (0, 0, 0), width=256, height=256)
    xy, depth = project(cam, seq.vertices)
    xy = np.ascontiguousarray(xy)
    depth = np.ascontiguousarray(depth)
    faces = np.ascontiguousarray(seq.faces)

    def run_numba():
        raster_mod._raster_kernel(xy, depth, faces, 256, 256)

    def run_numpy():
        raster_mod._raster_python(xy, depth, faces, 256, 256)

    return [("raster 256^2", run_numba if backend.HAVE_NUMBA else None, run_numpy)]


def bench_marching_cubes(repeats):
    field = sphere_field(radius=0.5)
    grid, lo, cell = mesh_mod._grid_sdf(field, 0.0, 64)
    inside = grid < 0
    occ = sum(
        inside[sx:64 + sx or None, sy:64 + sy or None, sz:64 + sz or None].astype(np.int8)
        for sx in (0, 1) for sy in (0, 1) for sz in (0, 1)
    )
    active = np.argwhere((occ > 0) & (occ < 8)).astype(np.int64)

    def run_numba():
        mesh_mod._cells_kernel(
            grid, active, mesh_mod.EDGE_TABLE, mesh_mod.TRI_TABLE,
            mesh_mod.EDGE_CORNERS, mesh_mod.CORNERS, 64,
        )

    def run_numpy():
        mesh_mod._cells_python(grid, active, 64)

    return [("marching cubes 64^3", run_numba if backend.HAVE_NUMBA else None, run_numpy)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    print(f"active backend: {backend.active_backend()} (numba available: {backend.HAVE_NUMBA})")
    print(f"{'kernel':24s} {'numba':>12s} {'numpy':>12s} {'speedup':>9s}")
    for rows in (bench_sdf(args.repeats), bench_raster(args.repeats), bench_marching_cubes(args.repeats)):
        for name, numba_fn, numpy_fn in rows:
            t_np = timeit(numpy_fn, args.repeats)
            if numba_fn is None:
                print(f"{name:24s} {'-':>12s} {t_np * 1e3:10.2f}ms {'-':>9s}")
                continue
            t_nb = timeit(numba_fn, args.repeats)
            print(f"{name:24s} {t_nb * 1e3:10.2f}ms {t_np * 1e3:10.2f}ms {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
