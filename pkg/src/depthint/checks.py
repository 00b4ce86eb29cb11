"""Finite-difference gradient checks and the warm-start benchmark."""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cg import StopConfig
from .ddi import DdiContext, ddi_backward_confidence, ddi_backward_gradients, ddi_forward
from .grid import GradientField, SparseObservations, finite_difference
from .metrics import compute_metrics
from .refine import DampedOracleRefiner, relative_error, run_refinement
from .sampling import sample_random_points
from .scenes import SceneSpec, synth_scene

FD_STEP = 1e-6
FD_TOL = 1e-12


def random_instance(seed: int, height: int, width: int, confidence: bool = False,
                    density: float = 0.4):
    """Random gradient field, observations, confidence and cotangent."""
    rng = np.random.default_rng(seed)
    gt = rng.uniform(1.0, 5.0, size=(height, width))
    mask = rng.random((height, width)) < density
    mask.flat[rng.integers(height * width)] = True
    obs = SparseObservations.from_dense(gt + rng.normal(0, 0.2, gt.shape).clip(-0.5, 0.5), mask)
    g = GradientField(rng.normal(0, 0.5, (height, width - 1)),
                      rng.normal(0, 0.5, (height - 1, width)))
    conf = rng.uniform(0.2, 0.9, size=(height, width)) if confidence else None
    grad_out = rng.normal(size=(height, width))
    return g, obs, conf, grad_out


def gradient_vjp_error(seed: int, height: int, width: int, step: float = FD_STEP,
                       tol: float = FD_TOL) -> float:
    """Relative error of the gradient-field VJP against central differences."""
    g, obs, _, grad_out = random_instance(seed, height, width)
    ctx = DdiContext(stop=StopConfig(rel_tol=tol))
    sol = ddi_forward(g, obs, None, ctx)
    analytic = ddi_backward_gradients(sol, grad_out).flat()

    base = g.flat()
    numeric = np.empty_like(base)
    for i in range(base.size):
        e = np.zeros_like(base)
        e[i] = step
        plus = ddi_forward(GradientField.from_flat(base + e, height, width), obs, None, ctx).depth
        minus = ddi_forward(GradientField.from_flat(base - e, height, width), obs, None, ctx).depth
        numeric[i] = float((grad_out * (plus - minus)).sum()) / (2 * step)
    return relative_error(analytic, numeric)


def confidence_vjp_error(seed: int, height: int, width: int, step: float = FD_STEP,
                         tol: float = FD_TOL) -> float:
    """Relative error of the confidence VJP against central differences."""
    g, obs, conf, grad_out = random_instance(seed, height, width, confidence=True)
    ctx = DdiContext(stop=StopConfig(rel_tol=tol))
    sol = ddi_forward(g, obs, conf, ctx)
    analytic = ddi_backward_confidence(sol, grad_out).ravel()

    numeric = np.zeros(height * width)
    for i in range(height * width):
        e = np.zeros(height * width)
        e[i] = step
        plus = ddi_forward(g, obs, conf + e.reshape(conf.shape), ctx).depth
        minus = ddi_forward(g, obs, conf - e.reshape(conf.shape), ctx).depth
        numeric[i] = float((grad_out * (plus - minus)).sum()) / (2 * step)
    return relative_error(analytic, numeric)


@dataclass
class BenchRun:
    iterations: list[int]
    rmse: list[float]
    seconds: float

    @property
    def total(self) -> int:
        return sum(self.iterations)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("OGNIDC_THREADS", "")))
    except ValueError:
        return os.cpu_count() or 1


def bench_problem(height: int, width: int, points: int, seed: int):
    gt = synth_scene(SceneSpec(height, width, seed=seed))
    obs = sample_random_points(gt, min(points, height * width), seed)
    return gt, obs


def warm_start_benchmark(height: int = 128, width: int = 128, steps: int = 5,
                         damping: float = 0.3, points: int = 500, seed: int = 0,
                         stop: StopConfig | None = None, alpha: float = 5.0) -> dict:
    """Damped-oracle refinement with and without warm start.

    Iteration totals cover the ``steps`` recorded solves; the initial
    zero-gradient solve is identical in both modes and reported separately.
    """
    gt, obs = bench_problem(height, width, points, seed)
    target = finite_difference(gt)
    ctx = DdiContext(alpha=alpha, stop=stop or StopConfig())

    def run(warm: bool) -> BenchRun:
        t0 = time.perf_counter()
        trace = run_refinement(obs, None, DampedOracleRefiner(target, damping), steps, ctx,
                               warm_start=warm)
        dt = time.perf_counter() - t0
        return BenchRun([r.stats.iterations for r in trace.records],
                        [compute_metrics(r.depth, gt).rmse for r in trace.records], dt), trace

    with ThreadPoolExecutor(max_workers=min(2, _threads())) as pool:
        (warm, trace), (cold, _) = pool.map(run, [True, False])
    ratio = warm.total / cold.total if cold.total else 1.0
    return {
        "height": height, "width": width, "steps": steps, "damping": damping,
        "points": int(obs.count), "seed": seed,
        "initial_iterations": trace.initial.forward_stats.iterations,
        "warm": {"iterations": warm.iterations, "total_iterations": warm.total,
                 "rmse_m": warm.rmse, "seconds": warm.seconds},
        "cold": {"iterations": cold.iterations, "total_iterations": cold.total,
                 "rmse_m": cold.rmse, "seconds": cold.seconds},
        "iteration_ratio": ratio,
    }
