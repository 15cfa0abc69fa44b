"""Score providers: the noise-prediction oracles driving distillation."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..tape import DTYPE
from .schedule import NoiseSchedule


class ProviderError(RuntimeError):
    """A provider failed for this request; the iteration should be skipped."""


class ProviderTimeout(ProviderError):
    pass


@dataclass
class ScoreRequest:
    z_tau: np.ndarray  # (H, W, C) noisy image
    tau: int
    nsm: np.ndarray  # (H_F, W_F, d_F) conditioning grid
    prompt: str = ""
    request_id: int = 0


@dataclass
class EchoProvider:
    """Predicts zero noise; exists to exercise plumbing end to end."""

    capabilities: dict = dc_field(default_factory=lambda: {"conditioned": False, "echo": True})

    def __call__(self, req: ScoreRequest) -> np.ndarray:
        return np.zeros_like(req.z_tau)


class AnalyticProvider:
    """Point-mass score oracle keyed by nearest state map.

    For the target z* whose key grid is L2-closest to the request's state
    map, predicts exactly the noise that would have produced z_tau from z*:
    eps_hat = (z_tau - alpha * z*) / sigma.
    """

    def __init__(self, targets, sched: NoiseSchedule):
        if not targets:
            raise ValueError("need at least one target")
        self.keys = np.stack([np.asarray(k, dtype=DTYPE).reshape(-1) for k, _, _ in targets])
        self.prompts = [p for _, p, _ in targets]
        self.images = [np.asarray(z, dtype=DTYPE) for _, _, z in targets]
        shp = self.images[0].shape
        if any(im.shape != shp for im in self.images):
            raise ValueError("all targets must share the render resolution")
        self.sched = sched
        self.capabilities = {"conditioned": True, "analytic": True}

    def select(self, nsm: np.ndarray) -> int:
        q = np.asarray(nsm, dtype=DTYPE).reshape(1, -1)
        if q.shape[1] != self.keys.shape[1]:
            raise ProviderError("state-map shape does not match provider keys")
        d = np.sum((self.keys - q) ** 2, axis=1)
        return int(np.argmin(d))

    def __call__(self, req: ScoreRequest) -> np.ndarray:
        i = self.select(req.nsm)
        z_star = self.images[i]
        if z_star.shape != req.z_tau.shape:
            raise ProviderError("request resolution does not match targets")
        a = self.sched.alpha(req.tau)
        s = self.sched.sigma(req.tau)
        return (req.z_tau - a * z_star) / s


def make_analytic_provider(targets, sched: NoiseSchedule) -> AnalyticProvider:
    """targets: iterable of (key state-map grid, prompt, target image z*)."""
    return AnalyticProvider(list(targets), sched)
