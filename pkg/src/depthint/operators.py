"""Matrix-free least-squares operators for gradient-domain depth integration.

The stacked system is::

        [ Dx              ]          [ gx                      ]
    A = [ Dy              ]      b = [ gy                      ]
        [ diag(w)         ]          [ w * O                   ]

with ``w = sqrt(alpha) * sqrt(C) * M`` (``C = 1`` without confidence).  Residual
vectors are laid out as the concatenation ``(rx, ry, ro)`` of lengths
``H(W-1)``, ``(H-1)W`` and ``HW``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, ShapeError, SingularSystemError
from .grid import GradientField, SparseObservations, as_confidence


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Grid size, observation mask, weight ``alpha`` and optional confidence.

    ``obs_weight`` (the diagonal of the third block of ``A``) is computed once
    here so that the forward and backward passes see identical numbers.
    """

    height: int
    width: int
    mask: np.ndarray
    alpha: float = 5.0
    confidence: np.ndarray | None = None
    require_observation: bool = True

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.shape != (self.height, self.width):
            raise ShapeError(f"mask shape {mask.shape} != grid {(self.height, self.width)}")
        if mask.dtype != bool:
            if not np.all((mask == 0) | (mask == 1)):
                raise DomainError("mask entries must be exactly 0 or 1")
            mask = mask.astype(bool)
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if self.require_observation and not mask.any():
            raise SingularSystemError("observation mask is empty; the system has a constant nullspace")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        w = np.sqrt(self.alpha) * mask.astype(np.float64)
        if self.confidence is not None:
            conf = as_confidence(self.confidence, (self.height, self.width)).copy()
            conf.setflags(write=False)
            object.__setattr__(self, "confidence", conf)
            w = w * np.sqrt(conf)
        w = w.ravel()
        w.setflags(write=False)
        object.__setattr__(self, "obs_weight", w)

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def nx(self) -> int:
        return self.height * (self.width - 1)

    @property
    def ny(self) -> int:
        return (self.height - 1) * self.width

    @property
    def residual_size(self) -> int:
        return self.nx + self.ny + self.size


class ResidualVector(NamedTuple):
    rx: np.ndarray
    ry: np.ndarray
    ro: np.ndarray


def split_residual(cfg: SystemConfig, r) -> ResidualVector:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (cfg.residual_size,):
        raise ShapeError(f"residual vector has length {r.size}, expected {cfg.residual_size}")
    return ResidualVector(r[:cfg.nx], r[cfg.nx:cfg.nx + cfg.ny], r[cfg.nx + cfg.ny:])


def _grid(cfg: SystemConfig, d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (cfg.size,):
        raise ShapeError(f"depth vector has length {d.size}, expected {cfg.size}")
    return d.reshape(cfg.height, cfg.width)


def _diff_adjoint(rx: np.ndarray, ry: np.ndarray, h: int, w: int) -> np.ndarray:
    out = np.zeros((h, w))
    out[:, 1:] += rx
    out[:, :-1] -= rx
    out[1:, :] += ry
    out[:-1, :] -= ry
    return out


def apply_A(cfg: SystemConfig, d) -> np.ndarray:
    D = _grid(cfg, d)
    return np.concatenate([np.diff(D, axis=1).ravel(),
                           np.diff(D, axis=0).ravel(),
                           cfg.obs_weight * D.ravel()])


def apply_At(cfg: SystemConfig, r) -> np.ndarray:
    rx, ry, ro = split_residual(cfg, r)
    h, w = cfg.height, cfg.width
    out = _diff_adjoint(rx.reshape(h, w - 1), ry.reshape(h - 1, w), h, w).ravel()
    return out + cfg.obs_weight * ro


def apply_normal(cfg: SystemConfig, d) -> np.ndarray:
    """``A^T A d`` without forming the residual vector."""
    D = _grid(cfg, d)
    out = _diff_adjoint(np.diff(D, axis=1), np.diff(D, axis=0), cfg.height, cfg.width).ravel()
    return out + cfg.obs_weight * (cfg.obs_weight * D.ravel())


def build_rhs(cfg: SystemConfig, g: GradientField, obs: SparseObservations) -> np.ndarray:
    """``A^T b`` for gradient targets ``g`` and observations ``obs``."""
    if g.shape != (cfg.height, cfg.width):
        raise ShapeError(f"gradient field {g.shape} != grid {(cfg.height, cfg.width)}")
    if obs.shape != (cfg.height, cfg.width):
        raise ShapeError(f"observations {obs.shape} != grid {(cfg.height, cfg.width)}")
    o = np.where(obs.mask, obs.values, 0.0).ravel()
    out = _diff_adjoint(g.gx, g.gy, cfg.height, cfg.width).ravel()
    return out + cfg.obs_weight * (cfg.obs_weight * o)


def normal_operator(cfg: SystemConfig):
    """Bind ``cfg`` into a one-argument callable for the CG solver."""
    return lambda d: apply_normal(cfg, d)
