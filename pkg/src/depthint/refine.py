"""Iterate-integrate refinement loop, training losses and an end-to-end VJP check."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .cg import SolveStats, StopConfig
from .ddi import DdiContext, DdiSolution, ddi_backward_gradients, ddi_forward
from .errors import DomainError, ShapeError
from .grid import (GradientField, SparseObservations, UpsampleWeights, convex_upsample,
                   convex_upsample_vjp, finite_difference)

DEFAULT_STEPS = 5
DEFAULT_GAMMA = 0.9
DEFAULT_LAMBDA = 1.0


class Refiner(Protocol):
    def __call__(self, g: GradientField, depth: np.ndarray,
                 obs: SparseObservations) -> GradientField:
        """Return the update added to ``g``."""


class ZeroRefiner:
    def __call__(self, g, depth, obs):
        return GradientField.zeros(*g.shape)


class DampedOracleRefiner:
    """Moves the gradient field a fixed fraction of the way to a target.

    ``factor = 1`` is the oracle refiner: one step lands on the target.
    """

    def __init__(self, target: GradientField, factor: float = 1.0):
        if not 0 < factor <= 1:
            raise DomainError(f"damping factor must lie in (0, 1], got {factor}")
        self.target = target
        self.factor = factor

    def __call__(self, g, depth, obs):
        return (self.target - g) * self.factor


def OracleRefiner(target: GradientField) -> DampedOracleRefiner:
    return DampedOracleRefiner(target, 1.0)


def parse_refiner(name: str, target: GradientField | None = None) -> Refiner:
    """Build a refiner from ``zero``, ``oracle`` or ``damped:<factor>``."""
    if name == "zero":
        return ZeroRefiner()
    if target is None:
        raise DomainError(f"refiner {name!r} needs a target gradient field")
    if name == "oracle":
        return OracleRefiner(target)
    if name.startswith("damped:"):
        try:
            factor = float(name.split(":", 1)[1])
        except ValueError:
            raise DomainError(f"bad damping factor in {name!r}") from None
        return DampedOracleRefiner(target, factor)
    raise DomainError(f"unknown refiner {name!r}")


@dataclass
class StepRecord:
    step: int
    gradients: GradientField
    solution: DdiSolution

    @property
    def depth(self) -> np.ndarray:
        return self.solution.depth

    @property
    def stats(self) -> SolveStats:
        return self.solution.forward_stats


@dataclass
class RefinementTrace:
    initial: DdiSolution
    records: list[StepRecord] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.records)

    def total_iterations(self) -> int:
        return sum(r.stats.iterations for r in self.records)


def run_refinement(obs: SparseObservations, conf, refiner: Refiner, steps: int = DEFAULT_STEPS,
                   ctx: DdiContext | None = None, warm_start: bool = True) -> RefinementTrace:
    """Run ``steps`` rounds of ``g <- g + refiner(g, depth, obs)`` then integrate.

    The starting depth (for ``g = 0``) is only fed to the refiner; step 1 is
    solved from zero, and each later step starts from the previous solution
    when ``warm_start`` is on.
    """
    if steps < 1:
        raise DomainError("refinement needs at least one step")
    ctx = (ctx or DdiContext()).warm_from(None)
    g = GradientField.zeros(*obs.shape)
    initial = ddi_forward(g, obs, conf, ctx)
    trace = RefinementTrace(initial)
    prev, depth = None, initial.depth
    for t in range(1, steps + 1):
        delta = refiner(g, depth, obs)
        if not isinstance(delta, GradientField) or delta.shape != g.shape:
            raise ShapeError("refiner returned an update of the wrong shape")
        g = g + delta
        sol = ddi_forward(g, obs, conf, ctx.warm_from(prev if warm_start else None))
        trace.records.append(StepRecord(t, g, sol))
        prev, depth = sol, sol.depth
    return trace


def backward_trace(trace: RefinementTrace, grad_outs: Sequence[np.ndarray],
                   warm_start: bool = True, stop: StopConfig | None = None) -> list[GradientField]:
    """Per-step gradient-field cotangents, solved from the last step backwards.

    The adjoint of step ``t+1`` seeds the adjoint solve of step ``t``.
    """
    if len(grad_outs) != trace.steps:
        raise ShapeError(f"expected {trace.steps} cotangents, got {len(grad_outs)}")
    out: list[GradientField] = [None] * trace.steps
    seed = None
    for i in reversed(range(trace.steps)):
        sol = trace.records[i].solution
        out[i] = ddi_backward_gradients(sol, grad_outs[i], warm_start=seed if warm_start else None,
                                        stop=stop)
        seed = sol.cached_adjoint if warm_start else None
    return out


def step_weights(steps: int, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    """``gamma^(T-t)`` for t = 1..T."""
    if not 0 < gamma <= 1:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    return gamma ** np.arange(steps - 1, -1, -1, dtype=np.float64)


def _reduce(x: np.ndarray, valid: np.ndarray, reduction: str) -> float:
    s = float(x[valid].sum())
    if reduction == "sum":
        return s
    if reduction == "mean":
        return s / max(int(valid.sum()), 1)
    raise DomainError(f"unknown reduction {reduction!r}")


def _valid(gt, valid):
    gt = np.asarray(gt, dtype=np.float64)
    valid = np.ones(gt.shape, dtype=bool) if valid is None else np.asarray(valid).astype(bool)
    if valid.shape != gt.shape:
        raise ShapeError(f"valid mask {valid.shape} != ground truth {gt.shape}")
    return gt, valid


def loss_depth(predictions: Sequence[tuple[np.ndarray, np.ndarray]], gt, valid=None,
               gamma: float = DEFAULT_GAMMA, reduction: str = "sum") -> float:
    """Decayed L2 + L1 loss on (depth, upsampled depth) pairs over valid pixels."""
    gt, valid = _valid(gt, valid)
    weights = step_weights(len(predictions), gamma)
    total = 0.0
    for wt, pair in zip(weights, predictions):
        for pred in pair:
            pred = np.asarray(pred, dtype=np.float64)
            if pred.shape != gt.shape:
                raise ShapeError(f"prediction {pred.shape} != ground truth {gt.shape}")
            e = pred - gt
            total += wt * (_reduce(e * e, valid, reduction) + _reduce(np.abs(e), valid, reduction))
    return total


def loss_depth_grad(predictions, gt, valid=None, gamma: float = DEFAULT_GAMMA,
                    reduction: str = "sum", l1: bool = True) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradient of :func:`loss_depth` with respect to every prediction.

    The L1 term uses ``sign(0) = 0``.  ``l1=False`` drops it, leaving the
    smooth L2 part only.
    """
    gt, valid = _valid(gt, valid)
    weights = step_weights(len(predictions), gamma)
    norm = 1.0 if reduction == "sum" else 1.0 / max(int(valid.sum()), 1)
    grads = []
    for wt, pair in zip(weights, predictions):
        gpair = []
        for pred in pair:
            e = np.asarray(pred, dtype=np.float64) - gt
            gr = 2.0 * e + (np.sign(e) if l1 else 0.0)
            gpair.append(np.where(valid, wt * norm * gr, 0.0))
        grads.append(tuple(gpair))
    return grads


def loss_gradients(g_preds: Sequence[GradientField], g_gt: GradientField,
                   gamma: float = DEFAULT_GAMMA) -> float:
    weights = step_weights(len(g_preds), gamma)
    total = 0.0
    for wt, g in zip(weights, g_preds):
        d = g - g_gt
        total += wt * float(np.abs(d.gx).sum() + np.abs(d.gy).sum())
    return total


def loss_total(predictions, gt, g_preds, g_gt, valid=None, gamma: float = DEFAULT_GAMMA,
               lam: float = DEFAULT_LAMBDA, reduction: str = "sum") -> float:
    return (loss_depth(predictions, gt, valid, gamma, reduction)
            + lam * loss_gradients(g_preds, g_gt, gamma))


def relative_error(approx, exact) -> float:
    """``max|approx - exact| / max|exact|`` (absolute error when ``exact`` is 0)."""
    a = np.asarray(approx, dtype=np.float64).ravel()
    b = np.asarray(exact, dtype=np.float64).ravel()
    scale = float(np.abs(b).max()) if b.size else 0.0
    err = float(np.abs(a - b).max()) if a.size else 0.0
    return err / scale if scale > 0 else err


@dataclass
class VjpCheck:
    max_rel_error: float
    analytic: GradientField
    numeric: GradientField


def _e2e_problem(seed: int, dims: tuple[int, int], consistent: bool):
    h, w = dims
    rng = np.random.default_rng(seed)
    gt = rng.uniform(1.0, 5.0, size=(h, w))
    mask = rng.random((h, w)) < 0.4
    mask.flat[rng.integers(h * w)] = True
    if consistent:
        obs = SparseObservations.from_dense(gt, mask)
        g = finite_difference(gt)
    else:
        obs = SparseObservations.from_dense(gt + rng.normal(0, 0.1, (h, w)).clip(-0.5, 0.5), mask)
        g = GradientField(rng.normal(0, 0.5, (h, w - 1)), rng.normal(0, 0.5, (h - 1, w)))
    weights = UpsampleWeights.from_logits(rng.normal(size=(h, w, 1, 1, 9)))
    if consistent:
        # identity upsample so the loss minimum is actually zero
        weights = UpsampleWeights.nearest(h, w, 1)
    return gt, obs, g, weights


def end_to_end_vjp_check(seed: int = 0, dims: tuple[int, int] = (4, 5), *, step: float = 1e-6,
                         consistent: bool = False, l1: bool = True, grad_scale: float = 1.0,
                         tol: float = 1e-12) -> VjpCheck:
    """Compare the backpropagated loss gradient on ``g`` against central differences.

    The scalar is ``loss_depth([(D, U(D))], gt)`` where ``D = ddi_forward(g)``
    and ``U`` is a factor-1 convex upsample with random weights.  With
    ``l1=False`` only the smooth L2 terms enter.  ``grad_scale`` multiplies
    the incoming cotangent (for linearity checks).
    """
    h, w = dims
    if h * w > 64:
        raise DomainError("end-to-end check is meant for grids of at most 64 pixels")
    gt, obs, g, weights = _e2e_problem(seed, dims, consistent)
    ctx = DdiContext(stop=StopConfig(rel_tol=tol))

    def loss(gf: GradientField) -> float:
        d = ddi_forward(gf, obs, None, ctx).depth
        pair = (d, convex_upsample(d, weights))
        if l1:
            return loss_depth([pair], gt)
        return sum(float(((p - gt) ** 2).sum()) for p in pair)

    sol = ddi_forward(g, obs, None, ctx)
    pair = (sol.depth, convex_upsample(sol.depth, weights))
    (gd, gu), = loss_depth_grad([pair], gt, l1=l1)
    grad_out = grad_scale * (gd + convex_upsample_vjp(gu, weights))
    analytic = ddi_backward_gradients(sol, grad_out)

    base = g.flat()
    numeric = np.empty_like(base)
    for i in range(base.size):
        e = np.zeros_like(base)
        e[i] = step
        plus = loss(GradientField.from_flat(base + e, h, w))
        minus = loss(GradientField.from_flat(base - e, h, w))
        numeric[i] = grad_scale * (plus - minus) / (2 * step)
    numeric_g = GradientField.from_flat(numeric, h, w)
    return VjpCheck(relative_error(analytic.flat(), numeric), analytic, numeric_g)
