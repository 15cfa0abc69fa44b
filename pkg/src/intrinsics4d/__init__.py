"""Temporally evolving object intrinsics at desk scale.

A hybrid 4D neural field (factorized planes + keyframed hash grids) holding
geometry and PBR materials, a differentiable sphere-tracing renderer, a
deformable-mesh template pipeline producing conditioning state maps, and a
score-distillation loop that optimizes the field against pluggable noise-
prediction providers.
"""

from . import backend, tape, field, render, template, distill, config

__version__ = "0.1.0"

__all__ = ["backend", "tape", "field", "render", "template", "distill", "config", "__version__"]
