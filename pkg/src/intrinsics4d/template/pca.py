"""Feature-space PCA for state-map compression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tape import DTYPE


@dataclass
class PcaBasis:
    mean: np.ndarray  # (C,)
    components: np.ndarray  # (d_F, C), orthonormal rows
    variance: np.ndarray  # (d_F,), non-increasing


def fit_pca(feature_maps, d_f: int) -> PcaBasis:
    """Mean-centered PCA over all spatial cells pooled across maps."""
    cells = np.concatenate([np.asarray(m, dtype=DTYPE).reshape(-1, m.shape[-1]) for m in feature_maps])
    if cells.shape[0] < d_f:
        raise ValueError(f"need at least {d_f} cells, got {cells.shape[0]}")
    if cells.shape[1] < d_f:
        raise ValueError(f"feature dim {cells.shape[1]} below d_f={d_f}")
    mean = cells.mean(axis=0)
    centered = cells - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    variance = (s**2) / max(cells.shape[0] - 1, 1)
    return PcaBasis(mean=mean, components=vt[:d_f], variance=variance[:d_f])


def project(basis: PcaBasis, fmap: np.ndarray) -> np.ndarray:
    """(h, w, C) -> (h, w, d_F) coefficients."""
    return (np.asarray(fmap, dtype=DTYPE) - basis.mean) @ basis.components.T


def save_basis(basis: PcaBasis, path) -> None:
    from ..field.checkpoint import write_arrays

    write_arrays(path, {"mean": basis.mean, "components": basis.components, "variance": basis.variance})


def load_basis(path) -> PcaBasis:
    from ..field.checkpoint import read_arrays

    a = read_arrays(path)
    return PcaBasis(
        mean=a["mean"].astype(DTYPE),
        components=a["components"].astype(DTYPE),
        variance=a["variance"].astype(DTYPE),
    )
