"""Isosurface extraction and OBJ mesh I/O."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import backend
from ..backend import njit
from ..tape import DTYPE
from .mc_tables import CORNERS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray  # (F, 3) int
    colors: np.ndarray | None = None  # (V, 3) in [0, 1]

    def edge_count(self) -> int:
        if len(self.faces) == 0:
            return 0
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        return len(np.unique(e, axis=0))

    def euler_characteristic(self) -> int:
        return len(self.vertices) - self.edge_count() + len(self.faces)


def _grid_sdf(field, t, resolution, chunk=65536):
    lo, hi = field.bounds
    lo = np.asarray(lo, dtype=DTYPE)
    hi = np.asarray(hi, dtype=DTYPE)
    n = resolution + 1
    axes = [np.linspace(lo[a], hi[a], n, dtype=DTYPE) for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.reshape(-1), gy.reshape(-1), gz.reshape(-1)], axis=1)
    out = np.empty(len(pts), dtype=DTYPE)
    for s in range(0, len(pts), chunk):
        out[s : s + chunk] = field.sdf(pts[s : s + chunk], t)
    return out.reshape(n, n, n), lo, (hi - lo) / resolution


@njit(cache=True)
def _cells_kernel(grid, cells, edge_table, tri_table, edge_corners, corners, res):  # pragma: no cover
    n_cells = cells.shape[0]
    keys = np.full(n_cells * 5 * 3, -1, dtype=np.int64)
    fracs = np.zeros((n_cells * 5 * 3,), dtype=np.float64)
    n_tri = 0
    stride = res + 2
    for ci in range(n_cells):
        ix, iy, iz = cells[ci, 0], cells[ci, 1], cells[ci, 2]
        cube = 0
        for c in range(8):
            v = grid[ix + corners[c, 0], iy + corners[c, 1], iz + corners[c, 2]]
            if v < 0.0:
                cube |= 1 << c
        if edge_table[cube] == 0:
            continue
        row = tri_table[cube]
        for k in range(0, 16, 3):
            if row[k] < 0:
                break
            for j in range(3):
                e = row[k + j]
                c0, c1 = edge_corners[e, 0], edge_corners[e, 1]
                p0x = ix + corners[c0, 0]
                p0y = iy + corners[c0, 1]
                p0z = iz + corners[c0, 2]
                p1x = ix + corners[c1, 0]
                p1y = iy + corners[c1, 1]
                p1z = iz + corners[c1, 2]
                v0 = grid[p0x, p0y, p0z]
                v1 = grid[p1x, p1y, p1z]
                if p1x < p0x or p1y < p0y or p1z < p0z:
                    p0x, p0y, p0z, p1x, p1y, p1z = p1x, p1y, p1z, p0x, p0y, p0z
                    v0, v1 = v1, v0
                axis = 0
                if p1y > p0y:
                    axis = 1
                elif p1z > p0z:
                    axis = 2
                denom = v1 - v0
                f = 0.5 if denom == 0.0 else -v0 / denom
                if f < 0.0:
                    f = 0.0
                elif f > 1.0:
                    f = 1.0
                idx = n_tri * 3 + j
                keys[idx] = ((p0x * stride + p0y) * stride + p0z) * 3 + axis
                fracs[idx] = f
            n_tri += 1
    return keys[: n_tri * 3], fracs[: n_tri * 3]


def _cells_python(grid, cells, res):
    keys = []
    fracs = []
    stride = res + 2
    for ix, iy, iz in cells:
        cube = 0
        for c in range(8):
            if grid[ix + CORNERS[c, 0], iy + CORNERS[c, 1], iz + CORNERS[c, 2]] < 0.0:
                cube |= 1 << c
        if EDGE_TABLE[cube] == 0:
            continue
        row = TRI_TABLE[cube]
        for k in range(0, 16, 3):
            if row[k] < 0:
                break
            for j in range(3):
                e = row[k + j]
                c0, c1 = EDGE_CORNERS[e]
                p0 = np.array([ix, iy, iz]) + CORNERS[c0]
                p1 = np.array([ix, iy, iz]) + CORNERS[c1]
                v0 = grid[tuple(p0)]
                v1 = grid[tuple(p1)]
                if tuple(p1) < tuple(p0):
                    p0, p1 = p1, p0
                    v0, v1 = v1, v0
                axis = int(np.argmax(p1 - p0))
                denom = v1 - v0
                f = 0.5 if denom == 0 else float(np.clip(-v0 / denom, 0.0, 1.0))
                keys.append(((p0[0] * stride + p0[1]) * stride + p0[2]) * 3 + axis)
                fracs.append(f)
    return np.asarray(keys, dtype=np.int64), np.asarray(fracs, dtype=DTYPE)


def marching_cubes(field, t: float, resolution: int) -> TriangleMesh:
    """Extract the sdf = 0 isosurface on a uniform grid.

    Triangles are wound so normals point outward (toward sdf > 0); shared
    lattice-edge vertices are welded, so closed surfaces come out watertight.
    Returns an empty mesh when the field has no sign change.
    """
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    grid, lo, cell = _grid_sdf(field, t, resolution)
    inside = grid < 0.0
    if not inside.any() or inside.all():
        return TriangleMesh(np.zeros((0, 3), dtype=DTYPE), np.zeros((0, 3), dtype=np.int64))

    # cells whose 8 corners disagree in sign
    c = inside
    occ = (
        c[:-1, :-1, :-1].astype(np.int8)
        + c[1:, :-1, :-1]
        + c[:-1, 1:, :-1]
        + c[1:, 1:, :-1]
        + c[:-1, :-1, 1:]
        + c[1:, :-1, 1:]
        + c[:-1, 1:, 1:]
        + c[1:, 1:, 1:]
    )
    active = np.argwhere((occ > 0) & (occ < 8)).astype(np.int64)
    if backend.USE_NUMBA:
        keys, fracs = _cells_kernel(
            grid, active, EDGE_TABLE, TRI_TABLE, EDGE_CORNERS, CORNERS, resolution
        )
    else:
        keys, fracs = _cells_python(grid, active, resolution)
    if len(keys) == 0:
        return TriangleMesh(np.zeros((0, 3), dtype=DTYPE), np.zeros((0, 3), dtype=np.int64))

    uniq, faces_flat = np.unique(keys, return_inverse=True)
    # first occurrence of each edge fixes its interpolation fraction
    first = np.full(len(uniq), -1, dtype=np.int64)
    seen = np.zeros(len(uniq), dtype=bool)
    for i, u in enumerate(faces_flat):
        if not seen[u]:
            seen[u] = True
            first[u] = i
    f = fracs[first]
    axis = uniq % 3
    rest = uniq // 3
    stride = resolution + 2
    bz = rest % stride
    by = (rest // stride) % stride
    bx = rest // (stride * stride)
    base = np.stack([bx, by, bz], axis=1).astype(DTYPE)
    verts_grid = base.copy()
    verts_grid[np.arange(len(uniq)), axis] += f
    vertices = lo + verts_grid * cell
    # table winding faces inward under the sdf<0-inside convention; swap to
    # get outward normals
    faces = faces_flat.reshape(-1, 3)[:, [0, 2, 1]]
    return TriangleMesh(vertices=vertices, faces=faces)


def write_obj(path, mesh: TriangleMesh) -> None:
    """ASCII OBJ; vertex colors, when present, ride on the v lines."""
    with open(path, "w") as fh:
        fh.write(f"# {len(mesh.vertices)} vertices, {len(mesh.faces)} faces\n")
        if mesh.colors is not None:
            for v, c in zip(mesh.vertices, mesh.colors):
                fh.write(f"v {v[0]:.8g} {v[1]:.8g} {v[2]:.8g} {c[0]:.6g} {c[1]:.6g} {c[2]:.6g}\n")
        else:
            for v in mesh.vertices:
                fh.write(f"v {v[0]:.8g} {v[1]:.8g} {v[2]:.8g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def read_obj(path) -> TriangleMesh:
    verts, colors, faces = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
                if len(parts) >= 7:
                    colors.append([float(x) for x in parts[4:7]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:4]]
                faces.append(idx)
    colors_arr = np.asarray(colors, dtype=DTYPE) if len(colors) == len(verts) and verts else None
    return TriangleMesh(
        vertices=np.asarray(verts, dtype=DTYPE).reshape(-1, 3),
        faces=np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        colors=colors_arr,
    )
