"""Variance-preserving noise schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tape import DTYPE


@dataclass
class NoiseSchedule:
    """Per-step cumulative alpha table; alpha^2 + sigma^2 = 1 identically.

    Steps are 1-based: tau in {1, ..., steps}, tau_min = 1.
    """

    steps: int
    alpha_bar: np.ndarray  # (steps,), strictly decreasing
    kind: str = "linear"
    tau_min: int = 1

    def alpha(self, tau: int) -> float:
        return float(np.sqrt(self.alpha_bar[tau - 1]))

    def sigma(self, tau: int) -> float:
        return float(np.sqrt(1.0 - self.alpha_bar[tau - 1]))

    def weight(self, tau: int, kind: str = "one") -> float:
        if kind == "one":
            return 1.0
        if kind == "sigma2":
            return float(1.0 - self.alpha_bar[tau - 1])
        raise ValueError(f"unknown weight kind {kind!r}")


def make_schedule(kind: str = "linear", steps: int = 1000, beta_min: float = 1e-4, beta_max: float = 2e-2) -> NoiseSchedule:
    if kind != "linear":
        raise ValueError(f"unsupported schedule kind {kind!r}")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    betas = np.linspace(beta_min, beta_max, steps, dtype=DTYPE)
    alpha_bar = np.cumprod(1.0 - betas)
    return NoiseSchedule(steps=steps, alpha_bar=alpha_bar, kind=kind)


def add_noise(z0: np.ndarray, eps: np.ndarray, tau: int, sched: NoiseSchedule) -> np.ndarray:
    """z_tau = alpha_tau * z0 + sigma_tau * eps."""
    z0 = np.asarray(z0, dtype=DTYPE)
    eps = np.asarray(eps, dtype=DTYPE)
    if eps.shape != z0.shape:
        raise ValueError("noise must match the clean tensor's shape")
    return sched.alpha(tau) * z0 + sched.sigma(tau) * eps
