"""Configuration for the hybrid 4D field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# the six coordinate-pair projections of (x, y, z, t)
PLANE_PAIRS = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))

# spatial hash primes (coordinate 0 is multiplied by 1)
HASH_PRIMES = (1, 2654435761, 805459861)


@dataclass
class FieldConfig:
    """Shapes and hyperparameters of the hybrid field.

    Defaults are sized for desk-scale experiments: small enough that
    gradient checks run in seconds, large enough to overfit toy targets.
    """

    plane_res: int = 64
    d_low: int = 16
    keyframes: int = 8
    levels: int = 8
    table_log2: int = 16
    d_level: int = 2
    hash_base_res: int = 16
    hash_growth: float = 1.5
    mlp_hidden: int = 64
    mlp_layers: int = 2
    sphere_radius_frac: float = 0.35
    bounds_lo: tuple = (-1.0, -1.0, -1.0)
    bounds_hi: tuple = (1.0, 1.0, 1.0)
    plane_init_noise: float = 0.05
    hash_init_noise: float = 1e-4

    @property
    def table_size(self) -> int:
        return 1 << self.table_log2

    @property
    def d_high(self) -> int:
        return self.levels * self.d_level

    @property
    def d_feature(self) -> int:
        return self.d_low + self.d_high

    def level_resolutions(self) -> np.ndarray:
        return np.floor(
            self.hash_base_res * self.hash_growth ** np.arange(self.levels)
        ).astype(np.int64)

    def extent(self) -> float:
        return float(np.max(np.asarray(self.bounds_hi) - np.asarray(self.bounds_lo)))

    def sphere_radius(self) -> float:
        return self.sphere_radius_frac * self.extent()

    def validate(self) -> None:
        if self.keyframes < 2:
            raise ValueError(f"keyframes must be >= 2, got {self.keyframes}")
        if self.plane_res < 2 or self.d_low < 1:
            raise ValueError("plane_res must be >= 2 and d_low >= 1")
        if self.levels < 1 or self.d_level < 1 or self.table_log2 < 1:
            raise ValueError("hash grid needs levels >= 1, d_level >= 1, table_log2 >= 1")
        if self.mlp_layers < 1 or self.mlp_hidden < 1:
            raise ValueError("MLP needs at least one hidden layer and unit")
        lo = np.asarray(self.bounds_lo, dtype=float)
        hi = np.asarray(self.bounds_hi, dtype=float)
        if not np.all(hi > lo):
            raise ValueError("bounds_hi must exceed bounds_lo componentwise")
        r0 = self.sphere_radius()
        if not 0.0 < r0 < float(np.min((hi - lo) / 2.0)):
            raise ValueError(
                f"initial sphere radius {r0:.4f} falls outside the scene bounds"
            )
