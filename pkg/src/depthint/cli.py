"""Command-line entry point.

Exit codes: 0 success, 1 check failure, 2 usage or shape error, 3 singular
system, 4 convergence failure.  Every command prints one JSON report line to
stdout.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import io as dio
from .cg import StopConfig
from .checks import confidence_vjp_error, gradient_vjp_error, warm_start_benchmark
from .ddi import DdiContext, ddi_forward
from .errors import (ConvergenceError, DepthIntError, DivergenceError, ShapeError,
                     SingularSystemError, DomainError)
from .grid import SparseObservations, crop_to_multiple, finite_difference, masked_avg_pool
from .metrics import compute_metrics
from .refine import parse_refiner, run_refinement
from .sampling import random_mask_augment, sample_random_points, subsample_rows
from .scenes import SceneSpec, synth_scene

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_SINGULAR, EXIT_CONVERGENCE = 0, 1, 2, 3, 4


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _report(command: str, params: dict, inputs=(), **extra) -> dict:
    rep = {"command": command, "inputs": {str(p): _digest(p) for p in inputs},
           "params": params}
    rep.update(extra)
    return rep


def _emit(report: dict, path=None):
    line = json.dumps(report, sort_keys=True)
    print(line)
    if path:
        Path(path).write_text(line + "\n")


def _stop(args) -> StopConfig:
    return StopConfig(rel_tol=args.tol, stall_window=args.stall_window,
                      stall_factor=args.stall_factor, max_iters=args.max_iters)


def _positive(name, value):
    if value < 1:
        raise DomainError(f"--{name} must be at least 1")


def cmd_synth(args) -> int:
    _positive("height", args.height)
    _positive("width", args.width)
    t0 = time.perf_counter()
    spec = SceneSpec(args.height, args.width, seed=args.seed, planes=args.planes, caps=args.caps,
                     steps=args.steps, max_tilt=args.max_tilt, depth_min=args.depth_min,
                     depth_max=args.depth_max)
    depth = synth_scene(spec)
    dio.write_dten(args.out, depth)
    _emit(_report("synth", vars_of(args), outputs={args.out: _digest(args.out)},
                  durations_s={"total": time.perf_counter() - t0}), args.report)
    return EXIT_OK


def cmd_grad(args) -> int:
    t0 = time.perf_counter()
    g = finite_difference(dio.read_dten(args.depth))
    dio.write_gradient(args.out, g)
    _emit(_report("grad", vars_of(args), [args.depth], outputs={args.out: _digest(args.out)},
                  durations_s={"total": time.perf_counter() - t0}), args.report)
    return EXIT_OK


def cmd_sample(args) -> int:
    t0 = time.perf_counter()
    gt = dio.read_dten(args.gt)
    obs = sample_random_points(gt, args.n, args.seed)
    if args.keep_every:
        obs = subsample_rows(obs, args.keep_every)
    if args.augment_seed is not None:
        obs = random_mask_augment(obs, args.augment_seed)
    dio.write_observations(args.out, obs)
    _emit(_report("sample", vars_of(args), [args.gt], points=obs.count,
                  outputs={args.out: _digest(args.out)},
                  durations_s={"total": time.perf_counter() - t0}), args.report)
    return EXIT_OK


def cmd_integrate(args) -> int:
    t0 = time.perf_counter()
    g = dio.read_gradient(args.grad)
    obs = dio.read_observations(args.obs, *g.shape)
    inputs = [args.grad, args.obs]
    conf = None
    if args.confidence:
        conf = dio.read_dten(args.confidence)
        inputs.append(args.confidence)
    t1 = time.perf_counter()
    sol = ddi_forward(g, obs, conf, DdiContext(alpha=args.alpha, stop=_stop(args)))
    t2 = time.perf_counter()
    dio.write_dten(args.out, sol.depth)
    _emit(_report("integrate", vars_of(args), inputs, solves=[sol.forward_stats.as_dict()],
                  outputs={args.out: _digest(args.out)},
                  durations_s={"solve": t2 - t1, "total": time.perf_counter() - t0}), args.report)
    return EXIT_OK


def cmd_complete(args) -> int:
    _positive("iters", args.iters)
    t0 = time.perf_counter()
    gt = dio.read_dten(args.gt)
    obs = dio.read_observations(args.obs, *gt.shape)
    inputs = [args.gt, args.obs]
    conf = dio.read_dten(args.confidence) if args.confidence else None
    if args.confidence:
        inputs.append(args.confidence)
    if args.factor > 1:
        f = args.factor
        gt_c = crop_to_multiple(gt, f)
        obs = masked_avg_pool(SparseObservations(crop_to_multiple(obs.values, f),
                                                 crop_to_multiple(obs.mask, f)), f)
        full = SparseObservations.from_dense(gt_c, gt_c > 0)
        pooled = masked_avg_pool(full, f)
        gt = np.where(pooled.mask, pooled.values, 0.0)
        if conf is not None:
            h, w = obs.shape
            conf = crop_to_multiple(conf, f).reshape(h, f, w, f).mean(axis=(1, 3))
    target = finite_difference(gt)
    refiner = parse_refiner(args.refiner, target)
    ctx = DdiContext(alpha=args.alpha, stop=_stop(args))
    trace = run_refinement(obs, conf, refiner, args.iters, ctx, warm_start=not args.no_warm_start)
    steps = []
    for rec in trace.records:
        m = compute_metrics(rec.depth, gt)
        steps.append({"step": rec.step, **rec.stats.as_dict(), "metrics": m.as_dict()})
    _emit(_report("complete", vars_of(args), inputs, steps=steps,
                  initial=trace.initial.forward_stats.as_dict(),
                  durations_s={"total": time.perf_counter() - t0}), args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    g_err = gradient_vjp_error(args.seed, args.height, args.width, step=args.step)
    c_err = confidence_vjp_error(args.seed, args.height, args.width, step=args.step)
    ok = g_err < args.threshold and c_err < args.threshold
    _emit(_report("gradcheck", vars_of(args), gradient_max_rel_error=g_err,
                  confidence_max_rel_error=c_err, passed=ok,
                  durations_s={"total": time.perf_counter() - t0}), args.out)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_bench(args) -> int:
    if args.iters < 2:
        raise DomainError("--iters must be at least 2")
    t0 = time.perf_counter()
    if not args.damping.startswith("damped:"):
        raise DomainError("--refiner must be damped:<factor>")
    damping = float(args.damping.split(":", 1)[1])
    result = warm_start_benchmark(args.height, args.width, args.iters, damping, args.points,
                                  args.seed, _stop(args), args.alpha)
    _emit(_report("bench", vars_of(args), **result,
                  durations_s={"total": time.perf_counter() - t0}), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    pred = dio.read_dten(args.pred)
    gt = dio.read_dten(args.gt)
    inputs = [args.pred, args.gt]
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} != ground truth {gt.shape}")
    valid = gt > 0
    if args.mask:
        valid = dio.read_dten(args.mask) != 0
        inputs.append(args.mask)
    report = compute_metrics(pred, gt, valid)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
    _emit(_report("eval", vars_of(args), inputs, metrics=report.as_dict(),
                  durations_s={"total": time.perf_counter() - t0}))
    return EXIT_OK


def vars_of(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _solver_flags(p, tol=1e-5):
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--tol", type=float, default=tol, help="CG relative residual threshold")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--stall-window", type=int, default=10,
                   help="stop when the best residual gains under --stall-factor over this many steps")
    p.add_argument("--stall-factor", type=float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthint", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic depth map")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--planes", type=int, default=3)
    p.add_argument("--caps", type=int, default=2)
    p.add_argument("--steps", type=int, default=2)
    p.add_argument("--max-tilt", type=float, default=0.3)
    p.add_argument("--depth-min", type=float, default=1.0)
    p.add_argument("--depth-max", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("grad", help="finite differences of a depth map")
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_grad)

    p = sub.add_parser("sample", help="sample sparse observations from a depth map")
    p.add_argument("--gt", required=True)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-every", type=int, default=0, help="keep only rows divisible by this")
    p.add_argument("--augment-seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("integrate", help="integrate a gradient field with sparse observations")
    p.add_argument("--grad", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--confidence")
    _solver_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("complete", help="run the refinement loop and report per-step metrics")
    p.add_argument("--gt", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--confidence")
    p.add_argument("--refiner", default="oracle", help="zero | oracle | damped:<factor>")
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--factor", type=int, default=1, help="pool inputs by this factor first")
    p.add_argument("--no-warm-start", action="store_true")
    _solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("gradcheck", help="check backward passes against finite differences")
    p.add_argument("--height", type=int, default=6)
    p.add_argument("--width", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="warm-start vs cold-start CG iteration counts")
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--iters", type=int, default=5)
    p.add_argument("--refiner", dest="damping", default="damped:0.3")
    p.add_argument("--points", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    _solver_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="depth-completion metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SingularSystemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except (ConvergenceError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (DepthIntError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
