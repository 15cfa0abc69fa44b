"""Temporal regularization against a refined copy of the rendered video."""

from __future__ import annotations

import numpy as np

from .. import tape as tp
from ..tape import DTYPE
from ..render.image import RenderOpts, render_with_tape


class IdentityRefiner:
    def __call__(self, video: np.ndarray) -> np.ndarray:
        return video


class ConstantOffsetRefiner:
    def __init__(self, offset: float):
        self.offset = offset

    def __call__(self, video: np.ndarray) -> np.ndarray:
        return video + self.offset


class TemporalSmoothRefiner:
    """[0.25, 0.5, 0.25] convolution along time (reflected ends), repeated."""

    def __init__(self, passes: int = 1):
        self.passes = passes

    def __call__(self, video: np.ndarray) -> np.ndarray:
        v = np.asarray(video, dtype=DTYPE)
        for _ in range(self.passes):
            padded = np.concatenate([v[1:2], v, v[-2:-1]], axis=0)
            v = 0.25 * padded[:-2] + 0.5 * padded[1:-1] + 0.25 * padded[2:]
        return v


def temporal_reg(field, camera, frame_count: int, refiner, env, opts: RenderOpts):
    """L_Vid = mean squared error between the rendered video and its refined
    copy, with gradients through the renders only (the refiner output is a
    constant target).

    Returns (l_vid, gradient map summed over frames).
    """
    if frame_count < 2:
        raise ValueError("frame_count must be >= 2")
    times = np.linspace(0.0, 1.0, frame_count)
    tapes, tensors, values = [], [], []
    for i, t in enumerate(times):
        tape = tp.Tape()
        _, img, _ = render_with_tape(field, camera, float(t), env, opts, tape)
        tapes.append(tape)
        tensors.append(img)
        values.append(np.asarray(img.value))
    video = np.stack(values)  # (F, H*W, 3)
    refined = np.asarray(refiner(video), dtype=DTYPE)
    if refined.shape != video.shape:
        raise ValueError("refiner must preserve the video shape")
    diff = video - refined
    l_vid = float(np.mean(diff**2))
    scale = 2.0 / diff.size
    total: dict[str, np.ndarray] = {}
    for i, (tape, tensor) in enumerate(zip(tapes, tensors)):
        g = tape.backward(tensor, scale * diff[i])
        for k, v in g.items():
            if k in total:
                total[k] += v
            else:
                total[k] = v
    return l_vid, total
