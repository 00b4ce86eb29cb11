"""Synthetic piecewise-smooth depth scenes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for :func:`synth_scene`.

    ``planes`` planar patches tile the image (Voronoi cells of random seeds),
    each tilted by up to ``max_tilt`` of the depth range across the image.
    ``caps`` adds spherical bumps and ``steps`` adds straight depth
    discontinuities.  Values are finally clipped into the depth range.
    """

    height: int
    width: int
    seed: int = 0
    planes: int = 3
    caps: int = 2
    steps: int = 2
    max_tilt: float = 0.3
    depth_min: float = 1.0
    depth_max: float = 10.0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise DomainError("scene dimensions must be at least 1")
        if not (0 < self.depth_min < self.depth_max) or not np.isfinite(self.depth_max):
            raise DomainError(f"invalid depth range [{self.depth_min}, {self.depth_max}]")
        if self.planes < 1 or self.caps < 0 or self.steps < 0 or self.max_tilt < 0:
            raise DomainError("primitive counts and tilt must be nonnegative (planes >= 1)")


def synth_scene(spec: SceneSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    lo, hi = spec.depth_min, spec.depth_max
    span = hi - lo
    mid = 0.5 * (lo + hi)
    # normalised pixel coordinates in [-0.5, 0.5]
    y, x = np.meshgrid(np.linspace(-0.5, 0.5, h) if h > 1 else np.zeros(1),
                       np.linspace(-0.5, 0.5, w) if w > 1 else np.zeros(1), indexing="ij")

    seeds = rng.uniform(-0.5, 0.5, size=(spec.planes, 2))
    tilts = rng.uniform(-1.0, 1.0, size=(spec.planes, 2)) * spec.max_tilt * span
    offsets = rng.uniform(-0.15, 0.15, size=spec.planes) * span * (spec.max_tilt > 0)
    dist = (y[None] - seeds[:, 0, None, None]) ** 2 + (x[None] - seeds[:, 1, None, None]) ** 2
    cell = np.argmin(dist, axis=0)
    depth = mid + offsets[cell] + tilts[cell, 0] * y + tilts[cell, 1] * x

    for _ in range(spec.steps):
        angle = rng.uniform(0, np.pi)
        c = rng.uniform(-0.3, 0.3)
        jump = rng.uniform(0.05, 0.2) * span * rng.choice([-1.0, 1.0])
        side = np.cos(angle) * x + np.sin(angle) * y > c
        depth = depth + jump * side

    for _ in range(spec.caps):
        cy, cx = rng.uniform(-0.4, 0.4, size=2)
        radius = rng.uniform(0.08, 0.25)
        height = rng.uniform(0.05, 0.15) * span * rng.choice([-1.0, 1.0])
        d2 = (y - cy) ** 2 + (x - cx) ** 2
        bump = np.sqrt(np.clip(1.0 - d2 / radius ** 2, 0.0, None))
        depth = depth - height * bump

    return np.clip(depth, lo, hi)
