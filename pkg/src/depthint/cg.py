"""Plain (unpreconditioned) conjugate gradients for SPD systems.

Stopping rules, checked after every iteration:

* ``tolerance`` -- ``||rhs - A x|| / max(||rhs||, eps) < rel_tol``;
* ``stalled``   -- the best residual norm seen in the last ``stall_window``
  iterations is not at least ``stall_factor`` (relative) below the best one
  of the ``stall_window`` iterations before that;
* ``max_iters`` -- the hard cap (``20 * n`` unless configured).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DivergenceError, DomainError, ShapeError

EPS = np.finfo(np.float64).eps

# recompute b - A x from scratch this often to stop the recurrence drifting
RESIDUAL_REFRESH = 50


@dataclass(frozen=True)
class StopConfig:
    rel_tol: float = 1e-5
    stall_window: int = 10
    stall_factor: float = 0.01
    max_iters: int | None = None

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise DomainError("rel_tol must be positive")
        if self.stall_window < 1:
            raise DomainError("stall_window must be at least 1")
        if not 0 < self.stall_factor < 1:
            raise DomainError("stall_factor must lie in (0, 1)")
        if self.max_iters is not None and self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")

    def iteration_cap(self, n: int) -> int:
        return self.max_iters if self.max_iters is not None else 20 * n


@dataclass(frozen=True)
class SolveStats:
    iterations: int
    final_rel_residual: float
    stop_reason: str  # "tolerance" | "stalled" | "max_iters"
    warm_started: bool

    def as_dict(self) -> dict:
        return {"iterations": self.iterations,
                "final_rel_residual": self.final_rel_residual,
                "stop_reason": self.stop_reason,
                "warm_started": self.warm_started}


def _stalled(history: list[float], window: int, factor: float) -> bool:
    k = len(history) - 1
    if k < 2 * window - 1:
        return False
    best_now = min(history[k - window + 1:k + 1])
    best_then = min(history[k - 2 * window + 1:k - window + 1])
    return best_now > (1.0 - factor) * best_then


def solve(operator: Callable[[np.ndarray], np.ndarray], rhs, x0=None,
          stop: StopConfig | None = None,
          callback: Callable[[int, np.ndarray], None] | None = None):
    """Solve ``operator(x) = rhs`` for a symmetric positive-definite operator.

    Returns ``(x, SolveStats)``.  ``x0`` defaults to zero.  ``callback(k, x)``
    is invoked with the iterate after each iteration (and with ``k = 0`` for
    the initial guess); it must not modify ``x``.
    """
    stop = stop or StopConfig()
    b = np.asarray(rhs, dtype=np.float64)
    if b.ndim != 1:
        raise ShapeError("rhs must be a vector")
    if not np.all(np.isfinite(b)):
        raise DomainError("rhs contains non-finite values")
    n = b.size
    warm = x0 is not None
    if warm:
        x = np.array(x0, dtype=np.float64)
        if x.shape != b.shape:
            raise ShapeError(f"x0 has shape {x.shape}, rhs has {b.shape}")
        r = b - operator(x)
    else:
        x = np.zeros(n)
        r = b.copy()

    scale = max(float(np.linalg.norm(b)), EPS)
    rr = float(r @ r)
    history = [np.sqrt(rr) / scale]
    if callback is not None:
        callback(0, x)
    if not np.isfinite(history[0]):
        raise DivergenceError("initial residual is not finite")

    cap = stop.iteration_cap(n)
    p = r.copy()
    k = 0
    reason = "max_iters"
    while True:
        if history[-1] < stop.rel_tol:
            reason = "tolerance"
            break
        if _stalled(history, stop.stall_window, stop.stall_factor):
            reason = "stalled"
            break
        if k >= cap:
            break
        Ap = operator(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp):
            raise DivergenceError(f"non-finite curvature at iteration {k}")
        if pAp <= 0.0:
            raise DivergenceError(f"operator is not positive definite (p^T A p = {pAp:g})")
        step = rr / pAp
        x += step * p
        k += 1
        if k % RESIDUAL_REFRESH == 0:
            r = b - operator(x)
        else:
            r -= step * Ap
        rr_new = float(r @ r)
        if not np.isfinite(rr_new):
            raise DivergenceError(f"residual became non-finite at iteration {k}")
        p *= rr_new / rr
        p += r
        rr = rr_new
        history.append(np.sqrt(rr) / scale)
        if callback is not None:
            callback(k, x)

    final = float(np.linalg.norm(b - operator(x))) / scale if k else history[0]
    return x, SolveStats(k, final, reason, warm)
