"""The score-distillation gradient step."""

from __future__ import annotations

import numpy as np

from .. import tape as tp
from ..tape import DTYPE
from .providers import ProviderError, ScoreRequest
from .schedule import NoiseSchedule, add_noise


def sds_step(
    z0: tp.Tensor,
    tape: tp.Tape,
    provider,
    nsm: np.ndarray,
    prompt: str,
    tau: int,
    eps: np.ndarray,
    sched: NoiseSchedule,
    weight_kind: str = "one",
    shape_hw: tuple | None = None,
    request_id: int = 0,
):
    """Noise the rendered image, query the provider, pull the residual back.

    The backward seed is w(tau) * alpha_tau * (eps_hat - eps): noising is
    affine in the render, so d z_tau / d theta = alpha_tau * d z0 / d theta
    and the provider's prediction enters as a constant.

    Returns (gradient map, info dict). Raises ProviderError on shape or
    finiteness violations so the caller can skip the iteration.
    """
    z0_val = np.asarray(z0.value, dtype=DTYPE)
    eps = np.asarray(eps, dtype=DTYPE)
    if eps.shape != z0_val.shape:
        raise ValueError("eps must match the render shape")
    z_tau = add_noise(z0_val, eps, tau, sched)

    img_shape = z_tau.shape if shape_hw is None else (*shape_hw, z_tau.shape[-1])
    req = ScoreRequest(
        z_tau=z_tau.reshape(img_shape),
        tau=tau,
        nsm=nsm,
        prompt=prompt,
        request_id=request_id,
    )
    eps_hat = np.asarray(provider(req), dtype=DTYPE)
    if eps_hat.shape != req.z_tau.shape:
        raise ProviderError(
            f"provider returned shape {eps_hat.shape}, expected {req.z_tau.shape}"
        )
    eps_hat = eps_hat.reshape(z0_val.shape)
    if not np.all(np.isfinite(eps_hat)):
        raise ProviderError("provider returned non-finite scores")

    w = sched.weight(tau, weight_kind)
    seed = w * sched.alpha(tau) * (eps_hat - eps)
    grads = tape.backward(z0, seed)
    residual = eps_hat - eps
    info = {
        "tau": tau,
        "weight": w,
        "proxy_loss": float(0.5 * np.mean(residual**2)),
        "residual_norm": float(np.linalg.norm(residual)),
    }
    return grads, info
