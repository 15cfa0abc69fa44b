"""The outer optimization loop: sample, render, score, update."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .. import tape as tp
from ..field.params import assert_finite, leaves
from ..render.image import RenderOpts, render_with_tape
from .optimizer import Adam
from .providers import ProviderError
from .sampling import ViewTimeConfig, sample_view_time
from .schedule import make_schedule
from .sds import sds_step
from .video import temporal_reg


@dataclass
class DistillConfig:
    iterations: int = 2000
    seed: int = 0
    lr_grids: float = 1e-2
    lr_mlp: float = 1e-3
    tau_range: tuple = (0.02, 0.98)
    weight_kind: str = "one"
    lambda_vid: float = 0.1
    vid_cadence: int = 10
    vid_frames: int = 8
    prompt: str = ""
    view: ViewTimeConfig = dc_field(default_factory=ViewTimeConfig)
    render: RenderOpts = dc_field(default_factory=lambda: RenderOpts(samples_per_pixel=8, shadows=False))
    checkpoint_every: int = 0
    out_dir: str | None = None


class DistillationAborted(RuntimeError):
    pass


def run_distillation(field, template_fn, provider, refiner, env, config: DistillConfig, metrics_path=None):
    """Optimize the field against provider scores conditioned on state maps.

    ``template_fn(camera, t)`` supplies the conditioning grid. Iterations
    with provider failures are skipped (logged); iterations whose gradients
    come back non-finite are rejected before touching the parameters, and
    three consecutive rejections abort. Deterministic for a fixed seed.

    Returns (params, metrics list); the metrics list has exactly one row per
    iteration and every logged loss is finite.
    """
    params = field.params
    sched = make_schedule(steps=1000)
    rng = np.random.default_rng(config.seed)
    opt = Adam(
        leaves(params),
        lr_grids=config.lr_grids,
        lr_mlp=config.lr_mlp,
        total_steps=max(config.iterations, 1),
    )
    lo = max(1, int(round(config.tau_range[0] * sched.steps)))
    hi = min(sched.steps, int(round(config.tau_range[1] * sched.steps)))
    metrics: list[dict] = []
    consecutive_rejects = 0
    writer = open(metrics_path, "w") if metrics_path else None
    try:
        for it in range(config.iterations):
            cam, t = sample_view_time(rng, config.view)
            tau = int(rng.integers(lo, hi + 1))
            ropts = dataclasses.replace(config.render, seed=config.render.seed + 9176 * it + 1)
            nsm = template_fn(cam, t)

            tape = tp.Tape()
            _, img, _ = render_with_tape(field, cam, t, env, ropts, tape)
            eps = rng.standard_normal(np.asarray(img.value).shape)
            row = {"iter": it, "tau": tau, "t": t, "proxy_loss": 0.0, "l_vid": 0.0, "grad_norm": 0.0, "status": "ok"}
            try:
                grads, info = sds_step(
                    img,
                    tape,
                    provider,
                    nsm,
                    config.prompt,
                    tau,
                    eps,
                    sched,
                    weight_kind=config.weight_kind,
                    shape_hw=(cam.height, cam.width),
                    request_id=it,
                )
                row["proxy_loss"] = info["proxy_loss"]
            except ProviderError as e:
                row["status"] = f"skipped: {e}"
                metrics.append(row)
                if writer:
                    writer.write(json.dumps(row) + "\n")
                continue

            if config.lambda_vid > 0 and config.vid_cadence > 0 and (it + 1) % config.vid_cadence == 0:
                l_vid, vg = temporal_reg(field, cam, config.vid_frames, refiner, env, ropts)
                row["l_vid"] = l_vid
                for k in grads:
                    grads[k] = grads[k] + config.lambda_vid * vg[k]

            gnorm2 = 0.0
            bad = False
            for g in grads.values():
                if not np.all(np.isfinite(g)):
                    bad = True
                    break
                gnorm2 += float(np.sum(g * g))
            if bad:
                consecutive_rejects += 1
                row["status"] = "rejected: non-finite gradient"
                metrics.append(row)
                if writer:
                    writer.write(json.dumps(row) + "\n")
                if consecutive_rejects >= 3:
                    raise DistillationAborted(
                        "three consecutive iterations produced non-finite gradients"
                    )
                continue
            consecutive_rejects = 0
            row["grad_norm"] = float(np.sqrt(gnorm2))

            lv = leaves(params)
            opt.step(lv, grads)
            assert_finite(params)

            if config.checkpoint_every and config.out_dir and (it + 1) % config.checkpoint_every == 0:
                from ..field.checkpoint import save_params

                Path(config.out_dir).mkdir(parents=True, exist_ok=True)
                save_params(params, Path(config.out_dir) / f"ckpt_{it + 1:06d}.i4d")

            metrics.append(row)
            if writer:
                writer.write(json.dumps(row) + "\n")
    finally:
        if writer:
            writer.close()
    return params, metrics
