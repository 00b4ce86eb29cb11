"""Dense direct solve of the integration problem, for test-scale grids only.

The system matrix is assembled row by row from the energy's definition and
shares no code with :mod:`depthint.operators`.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError, SingularSystemError, SizeError
from .grid import GradientField, SparseObservations

MAX_UNKNOWNS = 400


def dense_system(height: int, width: int, mask, alpha: float, conf=None,
                 g: GradientField | None = None, obs: SparseObservations | None = None):
    """Explicit stacked matrix ``A`` (and ``b`` when ``g`` and ``obs`` are given)."""
    n = height * width
    if n > MAX_UNKNOWNS:
        raise SizeError(f"dense oracle is capped at {MAX_UNKNOWNS} unknowns, got {n}")
    mask = np.asarray(mask).astype(bool)
    conf = np.ones((height, width)) if conf is None else np.asarray(conf, dtype=np.float64)
    rows, rhs = [], []

    def idx(j, i):
        return j * width + i

    for j in range(height):
        for i in range(1, width):
            row = np.zeros(n)
            row[idx(j, i)], row[idx(j, i - 1)] = 1.0, -1.0
            rows.append(row)
            rhs.append(g.gx[j, i - 1] if g is not None else 0.0)
    for j in range(1, height):
        for i in range(width):
            row = np.zeros(n)
            row[idx(j, i)], row[idx(j - 1, i)] = 1.0, -1.0
            rows.append(row)
            rhs.append(g.gy[j - 1, i] if g is not None else 0.0)
    for j in range(height):
        for i in range(width):
            row = np.zeros(n)
            wt = np.sqrt(alpha) * np.sqrt(conf[j, i]) * float(mask[j, i])
            row[idx(j, i)] = wt
            rows.append(row)
            rhs.append(wt * obs.values[j, i] if obs is not None and mask[j, i] else 0.0)
    return np.array(rows), np.array(rhs)


def dense_oracle_solve(g: GradientField, obs: SparseObservations, conf=None,
                       alpha: float = 5.0) -> np.ndarray:
    h, w = obs.shape
    if g.shape != (h, w):
        raise ShapeError(f"gradient field {g.shape} != observations {(h, w)}")
    if h * w > MAX_UNKNOWNS:
        raise SizeError(f"dense oracle is capped at {MAX_UNKNOWNS} unknowns, got {h * w}")
    if not obs.mask.any():
        raise SingularSystemError("observation mask is empty")
    A, b = dense_system(h, w, obs.mask, alpha, conf, g, obs)
    AtA = A.T @ A
    Atb = A.T @ b
    try:
        x = np.linalg.solve(AtA, Atb)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from None
    return x.reshape(h, w)
