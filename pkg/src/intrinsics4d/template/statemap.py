"""Neural state maps: render, (optionally) denoise, encode, compress, pool."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tape import DTYPE
from ..render.camera import CameraPose
from .consistency import consistency_denoise
from .encoder import encode_features
from .mesh import DeformableMeshSequence
from .pca import PcaBasis, fit_pca, project
from .raster import render_template


@dataclass
class NsmConfig:
    height: int = 16
    width: int = 16
    d_f: int = 3
    render_size: int = 128  # template render resolution feeding the encoder


@dataclass
class DenoiseOpts:
    """Optional consistency-model cleanup of the raw template render."""

    schedule: object
    denoiser: object
    tau_index: int
    noise_seed: int = 0


@dataclass
class NeuralStateMap:
    grid: np.ndarray  # (H_F, W_F, d_F)
    camera: CameraPose
    frame: int


def average_pool(fmap: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Area binning down to (out_h, out_w); bins absorb uneven remainders."""
    h, w, c = fmap.shape
    if h < out_h or w < out_w:
        raise ValueError("cannot pool up")
    iy = (np.arange(h) * out_h) // h
    ix = (np.arange(w) * out_w) // w
    out = np.zeros((out_h, out_w, c), dtype=DTYPE)
    cnt = np.zeros((out_h, out_w, 1), dtype=DTYPE)
    yy, xx = np.meshgrid(iy, ix, indexing="ij")
    np.add.at(out, (yy.reshape(-1), xx.reshape(-1)), fmap.reshape(-1, c))
    np.add.at(cnt, (yy.reshape(-1), xx.reshape(-1)), 1.0)
    return out / cnt


def neural_state_map(
    seq: DeformableMeshSequence,
    camera: CameraPose,
    frame: int,
    encoder,
    basis: PcaBasis,
    config: NsmConfig | None = None,
    denoise: DenoiseOpts | None = None,
) -> NeuralStateMap:
    """The conditioning signal for one (viewpoint, time) query.

    Pure function of its inputs: rendering, encoding, projection, and
    pooling are all deterministic; the optional denoising pass draws its
    noise from a seed carried in ``denoise``.
    """
    config = config or NsmConfig()
    cam_r = CameraPose(
        rotation=camera.rotation,
        translation=camera.translation,
        fov_y=camera.fov_y,
        width=config.render_size,
        height=config.render_size,
    )
    img = render_template(seq, cam_r, frame)
    if denoise is not None:
        sched = denoise.schedule
        rng = np.random.default_rng(denoise.noise_seed)
        eps = rng.standard_normal(img.shape)
        noisy = sched.alpha(denoise.tau_index) * img + sched.sigma(denoise.tau_index) * eps
        img = consistency_denoise(noisy, None, denoise.tau_index, sched, denoise.denoiser)
        img = np.clip(img, 0.0, 1.0)
    fmap = encode_features(img, encoder)
    coeffs = project(basis, fmap)
    grid = average_pool(coeffs, config.height, config.width)
    if grid.shape != (config.height, config.width, config.d_f):
        raise ValueError(f"state map came out {grid.shape}, config wants {(config.height, config.width, config.d_f)}")
    if not np.all(np.isfinite(grid)):
        raise ValueError("state map contains non-finite values")
    return NeuralStateMap(grid=grid, camera=camera, frame=frame)


def fit_basis_on_grid(
    seq: DeformableMeshSequence,
    cameras,
    frames,
    encoder,
    d_f: int,
    render_size: int = 128,
) -> PcaBasis:
    """Fit the PCA basis on template renders over a (viewpoint, time) grid."""
    maps = []
    for cam in cameras:
        for f in frames:
            cam_r = CameraPose(
                rotation=cam.rotation,
                translation=cam.translation,
                fov_y=cam.fov_y,
                width=render_size,
                height=render_size,
            )
            maps.append(encode_features(render_template(seq, cam_r, f), encoder))
    return fit_pca(maps, d_f)
