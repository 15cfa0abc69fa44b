"""Adam with per-group learning rates and cosine decay."""

from __future__ import annotations

import numpy as np


class Adam:
    """Grid leaves (planes, hash tables) get ``lr_grids``; MLP leaves get
    ``lr_mlp``. Cosine decay to a 5% floor over ``total_steps``."""

    def __init__(self, leaves: dict, lr_grids: float = 1e-2, lr_mlp: float = 1e-3, total_steps: int = 1000, betas=(0.9, 0.99), eps: float = 1e-8):
        self.lr_grids = lr_grids
        self.lr_mlp = lr_mlp
        self.total_steps = max(total_steps, 1)
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in leaves.items()}
        self.v = {k: np.zeros_like(v) for k, v in leaves.items()}

    def _lr(self, name: str) -> float:
        base = self.lr_grids if name in ("planes", "hash") else self.lr_mlp
        frac = min(self.t / self.total_steps, 1.0)
        return base * (0.05 + 0.95 * 0.5 * (1.0 + np.cos(np.pi * frac)))

    def step(self, leaves: dict, grads: dict) -> None:
        self.t += 1
        for name, g in grads.items():
            arr = leaves[name]
            m, v = self.m[name], self.v[name]
            m[...] = self.b1 * m + (1 - self.b1) * g
            v[...] = self.b2 * v + (1 - self.b2) * g * g
            mh = m / (1 - self.b1**self.t)
            vh = v / (1 - self.b2**self.t)
            arr -= self._lr(name) * mh / (np.sqrt(vh) + self.eps)
