"""Single-step consistency-model denoising of noisy renders.

Boundary parameterization (sigma_data = 0.5, steps normalized to unit
range): c_skip(tau) = sd^2 / ((tau - tau_min)^2 + sd^2) and
c_out(tau) = sd * (tau - tau_min) / sqrt(tau^2 + sd^2), so the map reduces
to the identity exactly at tau_min.
"""

from __future__ import annotations

import numpy as np

from ..tape import DTYPE

SIGMA_DATA = 0.5


def boundary_coeffs(tau_index: int, schedule):
    n = schedule.steps
    s = (tau_index - schedule.tau_min) / n
    st = tau_index / n
    c_skip = SIGMA_DATA**2 / (s**2 + SIGMA_DATA**2)
    c_out = SIGMA_DATA * s / np.sqrt(st**2 + SIGMA_DATA**2)
    return float(c_skip), float(c_out)


def consistency_denoise(z: np.ndarray, cond, tau_index: int, schedule, denoiser) -> np.ndarray:
    """f(z, c, tau) = c_skip * z + c_out * (z - sigma_tau * eps(z, c, tau)) / alpha_tau.

    ``denoiser(z, cond, tau_index)`` predicts the injected noise; passing the
    zero predictor reduces the output to (c_skip + c_out / alpha_tau) * z.
    """
    if not schedule.tau_min <= tau_index <= schedule.steps:
        raise ValueError(f"tau index {tau_index} outside schedule range")
    alpha = schedule.alpha(tau_index)
    sigma = schedule.sigma(tau_index)
    if alpha <= 0.0:
        raise ValueError("alpha_tau must be positive for consistency denoising")
    z = np.asarray(z, dtype=DTYPE)
    c_skip, c_out = boundary_coeffs(tau_index, schedule)
    eps = np.asarray(denoiser(z, cond, tau_index), dtype=DTYPE)
    if eps.shape != z.shape:
        raise ValueError("denoiser must preserve shape")
    return c_skip * z + c_out * (z - sigma * eps) / alpha


def zero_denoiser(z, cond, tau_index):
    return np.zeros_like(z)
