"""Acceptance criteria 1-13.  Each test prints one PASS/FAIL line with the measured value."""
import json

import numpy as np
import pytest

from depthint import io as dio
from depthint.cg import StopConfig
from depthint.checks import confidence_vjp_error, gradient_vjp_error, random_instance, warm_start_benchmark
from depthint.cli import main
from depthint.ddi import DdiContext, ddi_backward_gradients, ddi_forward
from depthint.grid import GradientField, SparseObservations, finite_difference
from depthint.metrics import compute_metrics
from depthint.operators import SystemConfig, apply_A, apply_At, apply_normal
from depthint.oracle import dense_oracle_solve
from depthint.refine import loss_depth, loss_gradients, loss_total, step_weights
from depthint.sampling import sample_random_points
from depthint.scenes import SceneSpec, synth_scene

pytestmark = pytest.mark.acceptance

TIGHT = DdiContext(stop=StopConfig(rel_tol=1e-12))
# solve to 1e-10 with the stall heuristic out of reach; the default stopping
# rule leaves errors well above these criteria's bounds (shown in the output)
TO_TOL = DdiContext(stop=StopConfig(rel_tol=1e-10, stall_window=10**9))


@pytest.fixture
def report(capsys):
    def emit(num, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num:2d} {title}: {detail}")
        assert ok, f"criterion {num} ({title}) failed: {detail}"
    return emit


def test_01_oracle_equivalence(report):
    rng = np.random.default_rng(101)
    worst = {False: 0.0, True: 0.0}
    default = 0.0
    for use_conf in (False, True):
        for k in range(50):
            h, w = rng.integers(3, 13, size=2)
            g, obs, conf, _ = random_instance(int(rng.integers(1 << 31)), int(h), int(w), use_conf)
            ref = dense_oracle_solve(g, obs, conf, alpha=5.0)
            d = ddi_forward(g, obs, conf, TO_TOL).depth
            worst[use_conf] = max(worst[use_conf], float(np.abs(d - ref).max()))
            default = max(default, float(np.abs(ddi_forward(g, obs, conf).depth - ref).max()))
    ok = max(worst.values()) < 1e-6
    report(1, "oracle equivalence", ok,
           f"max diff no-conf {worst[False]:.2e}, conf {worst[True]:.2e} (< 1e-6, rel_tol 1e-10); "
           f"default stop rule {default:.2e}")


def test_02_exact_recovery(report):
    worst, default = {}, {}
    for n in (1, 5, 50, 500):
        worst[n] = default[n] = 0.0
        for seed in range(20):
            gt = synth_scene(SceneSpec(64, 64, seed=seed))
            obs = sample_random_points(gt, n, seed)
            g = finite_difference(gt)
            worst[n] = max(worst[n], float(np.abs(ddi_forward(g, obs, None, TO_TOL).depth - gt).max()))
            default[n] = max(default[n], float(np.abs(ddi_forward(g, obs).depth - gt).max()))
    ok = max(worst.values()) < 1e-5
    report(2, "exact recovery", ok,
           ", ".join(f"{n} pts {e:.2e}" for n, e in worst.items()) + " (< 1e-5 m, rel_tol 1e-10); "
           "default stop rule " + ", ".join(f"{e:.1e}" for e in default.values()))


def test_03_gradient_vjp(report):
    errs = {dims: max(gradient_vjp_error(s, *dims) for s in range(20)) for dims in ((4, 5), (6, 8))}
    ok = max(errs.values()) < 1e-4
    report(3, "gradient-field VJP", ok,
           ", ".join(f"{h}x{w} {e:.2e}" for (h, w), e in errs.items()) + " (< 1e-4)")


def test_04_confidence_vjp(report):
    err = max(confidence_vjp_error(s, 4, 4) for s in range(20))
    report(4, "confidence VJP", err < 1e-4, f"max rel error {err:.2e} (< 1e-4)")


def test_05_worked_example(report):
    obs = SparseObservations(np.array([[0.0, 2.0]]), np.array([[True, True]]))
    g = GradientField(np.array([[1.0]]), np.zeros((0, 2)))
    sol = ddi_forward(g, obs, None, TIGHT)
    fwd = float(np.abs(sol.depth - np.array([[1 / 7, 13 / 7]])).max())
    cot = ddi_backward_gradients(sol, np.array([[1.0, 0.0]]))
    bwd = abs(float(cot.gx[0, 0]) + 1 / 7)
    report(5, "worked 1x2 instance", max(fwd, bwd) < 1e-9,
           f"forward err {fwd:.1e}, cotangent err {bwd:.1e} (< 1e-9)")


def test_06_adjoint_symmetry(report):
    rng = np.random.default_rng(606)
    worst = 0.0
    for use_conf in (False, True):
        for _ in range(100):
            mask = rng.random((7, 5)) < 0.4
            conf = rng.uniform(0, 1, (7, 5)) if use_conf else None
            cfg = SystemConfig(7, 5, mask, 5.0, conf, require_observation=False)
            x, y = rng.normal(size=cfg.size), rng.normal(size=cfg.residual_size)
            z = rng.normal(size=cfg.size)
            worst = max(worst, abs(apply_A(cfg, x) @ y - x @ apply_At(cfg, y)),
                        abs(apply_normal(cfg, x) @ z - x @ apply_normal(cfg, z)))
    report(6, "adjoint and symmetry", worst < 1e-12, f"max |difference| {worst:.1e} (< 1e-12)")


def test_07_confidence_limits(report):
    rng = np.random.default_rng(707)
    ones_err = zero_err = 0.0
    for _ in range(20):
        h, w = (int(v) for v in rng.integers(3, 10, size=2))
        g, obs, _, _ = random_instance(int(rng.integers(1 << 31)), h, w, density=0.5)
        ones_err = max(ones_err, float(np.abs(
            ddi_forward(g, obs, np.ones((h, w))).depth - ddi_forward(g, obs).depth).max()))
        idx = np.flatnonzero(obs.mask)
        if idx.size < 2:
            continue
        p = int(rng.choice(idx))
        conf = np.ones((h, w))
        conf.flat[p] = 0.0
        removed = obs.mask.copy()
        removed.flat[p] = False
        reduced = SparseObservations(obs.values, removed)
        for a, b in ((ddi_forward(g, obs, conf, TIGHT).depth, ddi_forward(g, reduced, None, TIGHT).depth),
                     (dense_oracle_solve(g, obs, conf), dense_oracle_solve(g, reduced))):
            zero_err = max(zero_err, float(np.abs(a - b).max()))
    ok = ones_err < 1e-12 and zero_err < 1e-9
    report(7, "confidence limits", ok,
           f"conf=1 diff {ones_err:.1e} (< 1e-12), conf=0 vs removal {zero_err:.1e} (< 1e-9)")


def test_08_warm_start_benefit(report):
    res = warm_start_benchmark(128, 128, steps=5, damping=0.3)
    ratio = res["iteration_ratio"]
    report(8, "warm-start benefit", ratio <= 0.70,
           f"warm {res['warm']['total_iterations']} / cold {res['cold']['total_iterations']} "
           f"= {ratio:.3f} (<= 0.70)")


def test_09_warm_start_correctness(report):
    rng = np.random.default_rng(909)
    stop = StopConfig()
    ctx = DdiContext(stop=stop)
    worst = 0.0
    for _ in range(20):
        h, w = (int(v) for v in rng.integers(8, 33, size=2))
        g, obs, conf, _ = random_instance(int(rng.integers(1 << 31)), h, w, bool(rng.integers(2)))
        nearby = g + GradientField(rng.normal(0, 0.1, g.gx.shape), rng.normal(0, 0.1, g.gy.shape))
        prev = ddi_forward(nearby, obs, conf, ctx)
        cold = ddi_forward(g, obs, conf, ctx).cached_primal
        warm = ddi_forward(g, obs, conf, ctx.warm_from(prev)).cached_primal
        worst = max(worst, float(np.linalg.norm(warm - cold) / (stop.rel_tol * np.linalg.norm(cold))))
    report(9, "warm-start correctness", worst <= 10,
           f"max ||warm-cold|| / (rel_tol ||x||) = {worst:.2f} (<= 10)")


def test_10_equivariance(report):
    rng = np.random.default_rng(1010)
    shift_err = scale_err = 0.0
    for _ in range(20):
        h, w = (int(v) for v in rng.integers(3, 17, size=2))
        g, obs, _, _ = random_instance(int(rng.integers(1 << 31)), h, w)
        base = ddi_forward(g, obs, None, TIGHT).depth
        c, s = rng.uniform(-3, 3), rng.uniform(0.1, 10)
        shifted = SparseObservations(obs.values + c * obs.mask, obs.mask)
        shift_err = max(shift_err, float(np.abs(ddi_forward(g, shifted, None, TIGHT).depth - (base + c)).max()))
        scaled = SparseObservations(s * obs.values, obs.mask)
        out = ddi_forward(g * s, scaled, None, TIGHT).depth
        scale_err = max(scale_err, float(np.abs(out - s * base).max() / np.abs(s * base).max()))
    ok = shift_err < 1e-8 and scale_err < 1e-8
    report(10, "equivariance", ok, f"shift {shift_err:.1e}, scale (rel) {scale_err:.1e} (< 1e-8)")


def test_11_loss_formulas(report):
    weights_ok = np.array_equal(step_weights(3, 0.9), np.array([0.9 ** 2, 0.9, 1.0]))
    weights_ok &= np.allclose(step_weights(3, 0.9), [0.81, 0.9, 1.0], rtol=0, atol=1e-15)
    single = loss_depth([(np.array([[3.0]]), np.array([[3.0]]))], np.array([[1.0]]))
    g1 = GradientField(np.array([[2.0]]), np.zeros((0, 2)))
    g0 = GradientField.zeros(1, 2)
    preds = [(np.array([[3.0, 1.0]]), np.array([[3.0, 1.0]]))]
    gt = np.array([[1.0, 1.0]])
    combined = loss_total(preds, gt, [g1], g0)
    lam_ok = combined == loss_depth(preds, gt) + 1.0 * loss_gradients([g1], g0) == 12.0 + 2.0
    ok = bool(weights_ok) and single == 12.0 and lam_ok
    report(11, "loss formulas", ok,
           f"weights {step_weights(3).tolist()}, single-pixel {single}, combined {combined} (expect 14.0)")


def _reference_metrics(pred, gt):
    se = ae = rel = ise = iae = 0.0
    n = 0
    for p, g in zip(pred.ravel(), gt.ravel()):
        if g > 0:
            n += 1
            se += (p - g) ** 2
            ae += abs(p - g)
            rel += abs(p - g) / g
            ise += (1000 / p - 1000 / g) ** 2
            iae += abs(1000 / p - 1000 / g)
    return (se / n) ** 0.5, ae / n, rel / n, (ise / n) ** 0.5, iae / n


def test_12_metrics(report):
    one = compute_metrics(np.array([[2.0]]), np.array([[1.0]]))
    zero = compute_metrics(np.full((3, 3), 4.0), np.full((3, 3), 4.0))
    exact = (one.imae == 500.0 and one.mae == 1.0 and one.rel == 1.0
             and (zero.rmse, zero.mae, zero.rel, zero.irmse, zero.imae) == (0, 0, 0, 0, 0))
    rng = np.random.default_rng(1212)
    worst = 0.0
    for _ in range(20):
        gt = rng.uniform(0.5, 20, (6, 7)) * (rng.random((6, 7)) < 0.8)
        gt.flat[0] = 3.0
        pred = rng.uniform(0.5, 20, (6, 7))
        m = compute_metrics(pred, gt)
        ref = _reference_metrics(pred, gt)
        got = (m.rmse, m.mae, m.rel, m.irmse, m.imae)
        worst = max(worst, max(abs(a - b) / max(abs(b), 1e-300) for a, b in zip(got, ref)))
    ok = exact and worst < 1e-12
    report(12, "metrics", ok, f"iMAE {one.imae}, zero case exact {exact}, max rel diff vs reference {worst:.1e}")


def _pipeline(dirpath, capsys):
    p = {k: str(dirpath / v) for k, v in dict(gt="gt.dten", obs="obs.csv", grad="g.bin",
                                              depth="d.dten", metrics="m.json").items()}
    steps = [["synth", "--height", "64", "--width", "64", "--seed", "3", "--out", p["gt"]],
             ["sample", "--gt", p["gt"], "--n", "500", "--seed", "3", "--out", p["obs"]],
             ["grad", "--depth", p["gt"], "--out", p["grad"]],
             ["integrate", "--grad", p["grad"], "--obs", p["obs"], "--tol", "1e-10", "--out", p["depth"]],
             ["eval", "--pred", p["depth"], "--gt", p["gt"], "--out", p["metrics"]]]
    codes = []
    for argv in steps:
        codes.append(main(argv))
        capsys.readouterr()
    return codes, json.loads((dirpath / "m.json").read_text())["rmse_m"]


def test_13_cli_round_trip(report, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    codes_a, rmse = _pipeline(a, capsys)
    codes_b, _ = _pipeline(b, capsys)
    same = all((a / f.name).read_bytes() == f.read_bytes() for f in b.iterdir())
    gc = main(["gradcheck"])
    capsys.readouterr()
    ok = codes_a == codes_b == [0] * 5 and rmse < 1e-5 and gc == 0 and same
    report(13, "CLI round trip", ok,
           f"RMSE {rmse:.2e} m (< 1e-5, --tol 1e-10), gradcheck exit {gc}, byte-identical reruns {same}")
