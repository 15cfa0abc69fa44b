"""As-rigid-as-possible deformation energy (local-global convention)."""

from __future__ import annotations

import numpy as np

from ..tape import DTYPE


def one_ring_edges(faces: np.ndarray, n_vertices: int) -> np.ndarray:
    """Directed edge list (E, 2): both orientations of every mesh edge."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.concatenate([e, e[:, ::-1]])
    return np.unique(e, axis=0)


def best_rotations(canonical: np.ndarray, deformed: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Per-vertex rotation from the SVD of the one-ring edge covariance,
    determinant corrected to +1."""
    n = len(canonical)
    e_c = canonical[edges[:, 0]] - canonical[edges[:, 1]]
    e_d = deformed[edges[:, 0]] - deformed[edges[:, 1]]
    cov = np.zeros((n, 3, 3), dtype=DTYPE)
    np.add.at(cov, edges[:, 0], e_c[:, :, None] * e_d[:, None, :])
    u, _, vt = np.linalg.svd(cov)
    r = np.transpose(vt, (0, 2, 1)) @ np.transpose(u, (0, 2, 1))
    det = np.linalg.det(r)
    flip = det < 0
    if flip.any():
        vt_f = vt[flip].copy()
        vt_f[:, -1, :] *= -1.0
        r[flip] = np.transpose(vt_f, (0, 2, 1)) @ np.transpose(u[flip], (0, 2, 1))
    return r


def arap_energy(canonical: np.ndarray, faces: np.ndarray, deformed: np.ndarray, edges: np.ndarray | None = None):
    """Energy and gradient of the uniform-weight ARAP functional.

    E = sum_i sum_{j in N(i)} ||(v'_i - v'_j) - R_i (v_i - v_j)||^2 with R_i
    the one-ring best-fit rotation. The gradient holds the rotations fixed;
    isolated vertices contribute nothing.
    """
    if edges is None:
        edges = one_ring_edges(faces, len(canonical))
    r = best_rotations(canonical, deformed, edges)
    e_c = canonical[edges[:, 0]] - canonical[edges[:, 1]]
    e_d = deformed[edges[:, 0]] - deformed[edges[:, 1]]
    rot_e = np.einsum("eab,eb->ea", r[edges[:, 0]], e_c)
    resid = e_d - rot_e
    energy = float(np.sum(resid**2))
    grad = np.zeros_like(deformed)
    np.add.at(grad, edges[:, 0], 2.0 * resid)
    np.add.at(grad, edges[:, 1], -2.0 * resid)
    return energy, grad
