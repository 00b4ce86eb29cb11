"""Differentiable depth integration.

``ddi_forward`` finds the depth map minimising

    sum (Dx D - gx)^2 + sum (Dy D - gy)^2 + alpha * sum C * M * (D - O)^2

by running CG on the normal equations.  The two backward functions return
vector-Jacobian products with respect to the gradient field and the
confidence map.  Both need ``v = (A^T A)^{-1} dL/dD``, which is solved once,
cached on the solution, and reused as the starting point of the next adjoint
solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import cg
from .cg import SolveStats, StopConfig
from .errors import ConvergenceError, DomainError, ShapeError, StateError
from .grid import GradientField, SparseObservations, as_confidence
from .operators import SystemConfig, build_rhs, normal_operator

DEFAULT_ALPHA = 5.0
# residual above which hitting max_iters is treated as failure
CONVERGENCE_FAILURE_RESIDUAL = 1e-3


@dataclass
class DdiSolution:
    """Minimiser of the integration energy plus what the backward pass needs.

    Everything except ``cached_adjoint`` (and ``backward_stats``) is treated as
    read-only.  Backward calls replace ``cached_adjoint`` wholesale, so they
    must not run concurrently on the same solution.
    """

    depth: np.ndarray
    config: SystemConfig
    observations: SparseObservations
    forward_stats: SolveStats
    stop: StopConfig
    cached_primal: np.ndarray
    cached_adjoint: np.ndarray | None = None
    backward_stats: SolveStats | None = None

    @property
    def has_confidence(self) -> bool:
        return self.config.confidence is not None


@dataclass(frozen=True)
class DdiContext:
    alpha: float = DEFAULT_ALPHA
    stop: StopConfig = field(default_factory=StopConfig)
    previous: DdiSolution | None = None

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    def warm_from(self, sol: DdiSolution | None) -> "DdiContext":
        return replace(self, previous=sol)


def _check_converged(stats: SolveStats, what: str):
    if stats.stop_reason == "max_iters" and stats.final_rel_residual > CONVERGENCE_FAILURE_RESIDUAL:
        raise ConvergenceError(f"{what} solve hit max_iters with relative residual "
                               f"{stats.final_rel_residual:.3e}")


def ddi_forward(g: GradientField, obs: SparseObservations, conf=None,
                ctx: DdiContext | None = None) -> DdiSolution:
    ctx = ctx or DdiContext()
    if g.shape != obs.shape:
        raise ShapeError(f"gradient field {g.shape} and observations {obs.shape} differ")
    h, w = obs.shape
    if conf is not None:
        conf = as_confidence(conf, (h, w))
    cfg = SystemConfig(h, w, obs.mask, ctx.alpha, conf)
    rhs = build_rhs(cfg, g, obs)

    x0 = None
    if ctx.previous is not None:
        x0 = ctx.previous.cached_primal
        if x0.shape != rhs.shape:
            raise ShapeError("warm-start solution was computed on a different grid")

    x, stats = cg.solve(normal_operator(cfg), rhs, x0=x0, stop=ctx.stop)
    _check_converged(stats, "forward")
    x.setflags(write=False)
    depth = x.reshape(h, w)
    return DdiSolution(depth=depth, config=cfg, observations=obs, forward_stats=stats,
                       stop=ctx.stop, cached_primal=x)


def solve_adjoint(sol: DdiSolution, grad_out, warm_start=None,
                  stop: StopConfig | None = None) -> np.ndarray:
    """``(A^T A)^{-1} dL/dD``, warm-started from ``warm_start`` or the cached adjoint.

    The result replaces ``sol.cached_adjoint``.
    """
    cfg = sol.config
    go = np.asarray(grad_out, dtype=np.float64)
    if go.shape != (cfg.height, cfg.width):
        raise ShapeError(f"cotangent shape {go.shape} != solution shape {(cfg.height, cfg.width)}")
    if not np.all(np.isfinite(go)):
        raise DomainError("cotangent contains non-finite values")
    x0 = warm_start if warm_start is not None else sol.cached_adjoint
    v, stats = cg.solve(normal_operator(cfg), go.ravel(), x0=x0, stop=stop or sol.stop)
    _check_converged(stats, "adjoint")
    sol.cached_adjoint = v
    sol.backward_stats = stats
    return v


def ddi_backward_gradients(sol: DdiSolution, grad_out, warm_start=None,
                           stop: StopConfig | None = None) -> GradientField:
    """Cotangent on the gradient field: the x/y blocks of ``A v``."""
    v = solve_adjoint(sol, grad_out, warm_start, stop)
    V = v.reshape(sol.config.height, sol.config.width)
    return GradientField(np.diff(V, axis=1), np.diff(V, axis=0))


def ddi_backward_confidence(sol: DdiSolution, grad_out, warm_start=None,
                            stop: StopConfig | None = None) -> np.ndarray:
    """Cotangent on the confidence map: ``v_i * alpha * M_i * (O_i - D_i)``."""
    if not sol.has_confidence:
        raise StateError("solution was computed without a confidence map")
    v = solve_adjoint(sol, grad_out, warm_start, stop)
    cfg = sol.config
    m = cfg.mask.ravel()
    o = np.where(m, sol.observations.values.ravel(), 0.0)
    cot = np.where(m, v * cfg.alpha * (o - sol.cached_primal), 0.0)
    return cot.reshape(cfg.height, cfg.width)
