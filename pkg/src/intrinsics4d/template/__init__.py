from .mesh import DeformableMeshSequence, uv_sphere, textured_sphere_sequence, flower_proxy_sequence
from .arap import arap_energy, one_ring_edges, best_rotations
from .raster import render_template, rasterize_flow, rasterize, project
from .deform import fit_deformation, FitConfig, FlowTargets
from .consistency import consistency_denoise, boundary_coeffs, zero_denoiser, SIGMA_DATA
from .encoder import ToyEncoder, encode_features
from .pca import PcaBasis, fit_pca, project as pca_project, save_basis, load_basis
from .statemap import NeuralStateMap, NsmConfig, DenoiseOpts, neural_state_map, fit_basis_on_grid, average_pool
from .flowio import read_flow, write_flow

__all__ = [
    "DeformableMeshSequence",
    "uv_sphere",
    "textured_sphere_sequence",
    "flower_proxy_sequence",
    "arap_energy",
    "one_ring_edges",
    "best_rotations",
    "render_template",
    "rasterize_flow",
    "rasterize",
    "project",
    "fit_deformation",
    "FitConfig",
    "FlowTargets",
    "consistency_denoise",
    "boundary_coeffs",
    "zero_denoiser",
    "SIGMA_DATA",
    "ToyEncoder",
    "encode_features",
    "PcaBasis",
    "fit_pca",
    "pca_project",
    "save_basis",
    "load_basis",
    "NeuralStateMap",
    "NsmConfig",
    "DenoiseOpts",
    "neural_state_map",
    "fit_basis_on_grid",
    "average_pool",
    "read_flow",
    "write_flow",
]
