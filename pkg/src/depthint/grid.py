"""Grid data types, flattening, resampling and finite differencing.

Depth maps and confidence maps are plain 2-D ``float64`` numpy arrays indexed
``[row, col]``.  Every module flattens them row-major (row outer, column
inner), which is what ``ndarray.ravel()`` does by default.

Gradient fields are stored compactly: ``gx`` has shape ``(H, W-1)`` and holds
``D[j, i] - D[j, i-1]``; ``gy`` has shape ``(H-1, W)`` and holds
``D[j, i] - D[j-1, i]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

SIMPLEX_ATOL = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def as_depth(depth, name: str = "depth") -> np.ndarray:
    """Validate and coerce a depth map to a 2-D finite float64 array."""
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise DomainError(f"{name} contains non-finite values")
    return d


def as_confidence(conf, shape: tuple[int, int] | None = None) -> np.ndarray:
    c = as_depth(conf, "confidence")
    if shape is not None and c.shape != tuple(shape):
        raise ShapeError(f"confidence shape {c.shape} != grid shape {tuple(shape)}")
    if np.any(c < 0.0) or np.any(c > 1.0):
        raise DomainError("confidence values must lie in [0, 1]")
    return c


def flatten(depth) -> np.ndarray:
    """Row-major flattening of a 2-D map."""
    return np.asarray(depth, dtype=np.float64).ravel().copy()


def unflatten(vec, height: int, width: int) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.ndim != 1 or v.size != height * width:
        raise ShapeError(f"vector of length {v.size} cannot form a {height}x{width} grid")
    return v.reshape(height, width).copy()


@dataclass(frozen=True, eq=False)
class GradientField:
    """Horizontal and vertical depth differences on an ``H x W`` grid."""

    gx: np.ndarray
    gy: np.ndarray

    def __post_init__(self):
        gx = np.asarray(self.gx, dtype=np.float64)
        gy = np.asarray(self.gy, dtype=np.float64)
        if gx.ndim != 2 or gy.ndim != 2:
            raise ShapeError("gx and gy must be 2-D")
        h, w = gx.shape[0], gx.shape[1] + 1
        if gy.shape != (h - 1, w):
            raise ShapeError(f"gx shape {gx.shape} and gy shape {gy.shape} describe different grids")
        if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
            raise DomainError("gradient field contains non-finite values")
        object.__setattr__(self, "gx", _frozen(gx))
        object.__setattr__(self, "gy", _frozen(gy))

    @property
    def height(self) -> int:
        return self.gx.shape[0]

    @property
    def width(self) -> int:
        return self.gx.shape[1] + 1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @classmethod
    def zeros(cls, height: int, width: int) -> "GradientField":
        return cls(np.zeros((height, width - 1)), np.zeros((height - 1, width)))

    def flat(self) -> np.ndarray:
        """Concatenation of row-major ``gx`` and ``gy``."""
        return np.concatenate([self.gx.ravel(), self.gy.ravel()])

    @classmethod
    def from_flat(cls, vec, height: int, width: int) -> "GradientField":
        v = np.asarray(vec, dtype=np.float64)
        nx = height * (width - 1)
        if v.shape != (nx + (height - 1) * width,):
            raise ShapeError(f"flat gradient vector has length {v.size}")
        return cls(v[:nx].reshape(height, width - 1), v[nx:].reshape(height - 1, width))

    def to_padded(self) -> np.ndarray:
        """Zero-padded ``(2, H, W)`` array; column 0 of x and row 0 of y are 0."""
        out = np.zeros((2, self.height, self.width))
        out[0, :, 1:] = self.gx
        out[1, 1:, :] = self.gy
        return out

    @classmethod
    def from_padded(cls, padded) -> "GradientField":
        p = np.asarray(padded, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != 2:
            raise ShapeError(f"padded gradient field must have shape (2, H, W), got {p.shape}")
        return cls(p[0, :, 1:], p[1, 1:, :])

    def __add__(self, other: "GradientField") -> "GradientField":
        _check_same(self, other)
        return GradientField(self.gx + other.gx, self.gy + other.gy)

    def __sub__(self, other: "GradientField") -> "GradientField":
        _check_same(self, other)
        return GradientField(self.gx - other.gx, self.gy - other.gy)

    def __mul__(self, s: float) -> "GradientField":
        return GradientField(self.gx * s, self.gy * s)

    __rmul__ = __mul__


def _check_same(a: GradientField, b: GradientField):
    if a.shape != b.shape:
        raise ShapeError(f"gradient fields differ in shape: {a.shape} vs {b.shape}")


@dataclass(frozen=True, eq=False)
class SparseObservations:
    """Observed depth ``values`` and a boolean validity ``mask``.

    Values at invalid pixels carry no meaning; constructors store 0 there.
    Only finiteness is enforced here, since the integrator is linear in the
    values; call :meth:`require_positive` where physical depth is expected.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = as_depth(self.values, "observation values")
        mask = np.asarray(self.mask)
        if mask.shape != values.shape:
            raise ShapeError(f"mask shape {mask.shape} != values shape {values.shape}")
        if mask.dtype != bool:
            if not np.all((mask == 0) | (mask == 1)):
                raise DomainError("mask entries must be exactly 0 or 1")
            mask = mask.astype(bool)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def require_positive(self) -> "SparseObservations":
        if np.any(self.values[self.mask] <= 0.0):
            raise DomainError("observed depth must be positive at valid pixels")
        return self

    @classmethod
    def from_dense(cls, depth, mask) -> "SparseObservations":
        """Observations of ``depth`` at the pixels selected by ``mask``."""
        mask = np.asarray(mask).astype(bool)
        return cls(np.where(mask, depth, 0.0), mask)

    @classmethod
    def empty(cls, height: int, width: int) -> "SparseObservations":
        return cls(np.zeros((height, width)), np.zeros((height, width), dtype=bool))


@dataclass(frozen=True, eq=False)
class UpsampleWeights:
    """Convex upsampling coefficients.

    ``weights[y, x, a, b, k]`` is the coefficient that the high-resolution
    pixel ``(y*factor + a, x*factor + b)`` puts on neighbor ``k`` of low-res
    cell ``(y, x)``.  Neighbors are ordered row-major over the offsets
    ``(dy, dx) in {-1, 0, 1}^2``, so ``k = 4`` is the cell itself.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 5 or w.shape[2] != w.shape[3] or w.shape[4] != 9 or w.shape[2] < 1:
            raise ShapeError(f"weights must have shape (h, w, f, f, 9), got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0.0):
            raise DomainError("upsample weights must be finite and nonnegative")
        if np.any(np.abs(w.sum(axis=-1) - 1.0) > SIMPLEX_ATOL):
            raise DomainError("each 9-vector of upsample weights must sum to 1")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def low_height(self) -> int:
        return self.weights.shape[0]

    @property
    def low_width(self) -> int:
        return self.weights.shape[1]

    @property
    def factor(self) -> int:
        return self.weights.shape[2]

    @classmethod
    def uniform(cls, low_height: int, low_width: int, factor: int) -> "UpsampleWeights":
        return cls(np.full((low_height, low_width, factor, factor, 9), 1.0 / 9.0))

    @classmethod
    def nearest(cls, low_height: int, low_width: int, factor: int) -> "UpsampleWeights":
        w = np.zeros((low_height, low_width, factor, factor, 9))
        w[..., 4] = 1.0
        return cls(w)

    @classmethod
    def from_logits(cls, logits) -> "UpsampleWeights":
        """Softmax over the last axis of a ``(h, w, f, f, 9)`` logit array."""
        z = np.asarray(logits, dtype=np.float64)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return cls(e / e.sum(axis=-1, keepdims=True))


def finite_difference(depth) -> GradientField:
    d = as_depth(depth)
    return GradientField(np.diff(d, axis=1), np.diff(d, axis=0))


def masked_avg_pool(obs: SparseObservations, factor: int) -> SparseObservations:
    """Average valid observations over non-overlapping ``factor x factor`` windows."""
    if factor <= 0:
        raise ShapeError(f"pooling factor must be positive, got {factor}")
    h, w = obs.shape
    if h % factor or w % factor:
        raise ShapeError(f"factor {factor} does not divide grid {h}x{w}; crop first")
    m = obs.mask.astype(np.float64)
    shape = (h // factor, factor, w // factor, factor)
    total = (np.where(obs.mask, obs.values, 0.0)).reshape(shape).sum(axis=(1, 3))
    count = m.reshape(shape).sum(axis=(1, 3))
    valid = count > 0
    values = np.divide(total, count, out=np.zeros_like(total), where=valid)
    return SparseObservations(values, valid)


def crop_to_multiple(a: np.ndarray, factor: int) -> np.ndarray:
    """Drop the bottom/right remainder so both dimensions divide ``factor``."""
    h, w = a.shape[:2]
    return a[: h - h % factor, : w - w % factor]


def _neighborhoods(low: np.ndarray) -> np.ndarray:
    """``(h, w, 9)`` stack of 3x3 neighborhoods with a replicated border."""
    h, w = low.shape
    p = np.pad(low, 1, mode="edge")
    return np.stack([p[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
                     for dy in (-1, 0, 1) for dx in (-1, 0, 1)], axis=-1)


def _check_upsample(low_shape, weights: UpsampleWeights):
    if low_shape != (weights.low_height, weights.low_width):
        raise ShapeError(f"low-res map {low_shape} does not match weights "
                         f"{(weights.low_height, weights.low_width)}")


def convex_upsample(low, weights: UpsampleWeights) -> np.ndarray:
    low = as_depth(low, "low-resolution depth")
    _check_upsample(low.shape, weights)
    h, w = low.shape
    f = weights.factor
    out = np.einsum("yxabk,yxk->yaxb", weights.weights, _neighborhoods(low))
    return out.reshape(h * f, w * f)


def convex_upsample_vjp(grad_out, weights: UpsampleWeights) -> np.ndarray:
    """Cotangent on the low-res map given a cotangent on the upsampled map."""
    h, w, f = weights.low_height, weights.low_width, weights.factor
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != (h * f, w * f):
        raise ShapeError(f"cotangent shape {g.shape} != upsampled shape {(h * f, w * f)}")
    g_nb = np.einsum("yxabk,yaxb->yxk", weights.weights, g.reshape(h, f, w, f))
    padded = np.zeros((h + 2, w + 2))
    k = 0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] += g_nb[..., k]
            k += 1
    # fold the replicated border back onto the edge cells
    padded[1, :] += padded[0, :]
    padded[h, :] += padded[h + 1, :]
    padded[:, 1] += padded[:, 0]
    padded[:, w] += padded[:, w + 1]
    return padded[1:h + 1, 1:w + 1].copy()
