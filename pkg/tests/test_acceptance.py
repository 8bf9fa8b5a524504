"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The benchmark runs are shared between criteria and computed once per session.
Runs collect first-order decrease violations instead of aborting so that the
decrease criterion can count them over the whole suite.
"""
import time
import warnings
from functools import lru_cache

import numpy as np
import pytest

from mlprox.harness import RunConfig, run
from mlprox.problems import (
    BurgersProblem,
    PinnProblem,
    SemilinearProblem,
    burgers_objective,
    pinn_objective,
    semilinear_objective,
)
from mlprox.prox import L1, Box, L1Box, Zero, prox_pullback
from mlprox.smooth import Counters, Curvature
from mlprox.spg import SPGParams, spg_solve
from mlprox.transfer import build_avg_1d, build_tensor_2d

pytestmark = pytest.mark.acceptance

# name -> (problem, n, levels, options)
BENCHMARKS = {
    "burgers-2048-L1": ("burgers", 2048, 1, {}),
    "burgers-2048-L2": ("burgers", 2048, 2, {}),
    "burgers-8192-L1": ("burgers", 8192, 1, {}),
    "burgers-8192-L2": ("burgers", 8192, 2, {}),
    "burgers-8192-L3": ("burgers", 8192, 3, {}),
    "semilinear-64-b0.01": ("semilinear", 64, 2, {"beta": 0.01}),
    "semilinear-64-b0.05": ("semilinear", 64, 2, {"beta": 0.05}),
    "semilinear-256-b0.01": ("semilinear", 256, 2, {"beta": 0.01}),
    "pinn-L1": ("pinn", None, 1, {}),
    "pinn-L2": ("pinn", None, 2, {}),
}
DESK = ("burgers-2048-L1", "burgers-2048-L2", "semilinear-64-b0.01", "semilinear-64-b0.05")
SEED = 0


def config(name):
    problem, n, levels, options = BENCHMARKS[name]
    return RunConfig(problem=problem, n=n, seed=SEED, levels=levels, options=dict(options),
                     tr={"fcd_action": "warn"})


@lru_cache(maxsize=None)
def bench(name):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        t0 = time.perf_counter()
        rep = run(config(name))
        wall = time.perf_counter() - t0
    return rep, wall


def report(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {number:>2}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, detail


def fine_iterations(rep):
    return len(rep.result.trace.level_rows(rep.levels - 1))


def test_c01_prox_restriction_commutation(capsys):
    rng = np.random.default_rng(0)
    phis = {"zero": Zero(), "l1": L1(0.3), "box": Box(-1.0, 1.0), "l1box": L1Box(0.3, -1.0, 1.0)}
    transfers = {"avg1d": build_avg_1d(64), "tensor2d": build_tensor_2d(16)}
    t_start = time.perf_counter()
    worst = {}
    for pname, phi in phis.items():
        for tname, R in transfers.items():
            err = 0.0
            for _ in range(1000):
                x = rng.uniform(-0.95, 0.95, R.n_fine)
                t = rng.uniform(0.05, 2.0)
                lhs = prox_pullback(phi, x, R, t, R.restrict(x))
                rhs = R.restrict(phi.prox(t, x))
                err = max(err, float(np.linalg.norm(lhs - rhs)))
            worst[f"{pname}/{tname}"] = err
    elapsed = time.perf_counter() - t_start
    ok = max(worst.values()) <= 1e-10 and elapsed < 5.0
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f"; {elapsed:.2f}s"
    report(capsys, 1, "prox/restriction commutation <= 1e-10", ok, detail)


def test_c02_row_orthonormality(capsys):
    t_start = time.perf_counter()
    worst = 0.0
    count = 0
    for k in range(1, 15):
        R = build_avg_1d(2**k)
        worst = max(worst, R.orthonormality_defect())
        count += 1
    n = 2
    while n <= 256:
        R = build_tensor_2d(n, 2)
        worst = max(worst, R.orthonormality_defect())
        count += 1
        n *= 2
    # Composite transfers of a three-level hierarchy as used by the solver.
    worst = max(worst, build_tensor_2d(256).compose(build_tensor_2d(128)).orthonormality_defect())
    worst = max(worst, build_avg_1d(16384).compose(build_avg_1d(8192)).orthonormality_defect())
    elapsed = time.perf_counter() - t_start
    ok = worst <= 1e-12 and elapsed < 5.0
    report(capsys, 2, "row orthonormality <= 1e-12", ok, f"{count + 2} transfers, max defect {worst:.1e}, {elapsed:.2f}s")


def test_c03_fraction_of_cauchy_decrease(capsys):
    total_rows = 0
    violations = 0
    worst_ratio = np.inf
    for name in BENCHMARKS:
        rep, _ = bench(name)
        trace = rep.result.trace
        violations += len(trace.fcd_violations)
        for r in trace.rows:
            total_rows += 1
            if r.fcd_bound > 0:
                worst_ratio = min(worst_ratio, r.pred / r.fcd_bound)
            if not r.pred >= r.fcd_bound:
                violations += 0 if r in trace.fcd_violations else 1
    ok = violations == 0
    report(capsys, 3, "fraction of Cauchy decrease on every iteration", ok,
           f"{violations} violations over {total_rows} iterations in {len(BENCHMARKS)} runs; min pred/bound {worst_ratio:.3g}")


def _rel_dir_errors(obj, x, rng):
    g = obj.gradient(x)
    errs = []
    for _ in range(5):
        d = rng.normal(size=x.size)
        d /= np.linalg.norm(d)
        eps = np.sqrt(np.finfo(float).eps) * max(1.0, np.linalg.norm(x))
        fd = (obj.value(x + eps * d) - obj.value(x - eps * d)) / (2 * eps)
        errs.append(abs(fd - g @ d) / max(abs(fd), abs(g @ d)))
    return max(errs)


def test_c04_gradient_consistency(capsys):
    rng = np.random.default_rng(11)
    t_start = time.perf_counter()
    fb, _ = burgers_objective(BurgersProblem(n=512, seed=SEED))
    fs, _ = semilinear_objective(SemilinearProblem(n=32, seed=SEED))
    pp = PinnProblem(seed=SEED)
    fp, _ = pinn_objective(pp)
    errs = {
        "burgers": _rel_dir_errors(fb, rng.normal(size=512), rng),
        "semilinear": _rel_dir_errors(fs, 5.0 * rng.normal(size=32 * 32), rng),
        "pinn": _rel_dir_errors(fp, pp.initial_point(), rng),
    }
    elapsed = time.perf_counter() - t_start
    ok = max(errs.values()) <= 1e-5 and elapsed < 60.0 and fp.dim == 240
    detail = ", ".join(f"{k}={v:.1e}" for k, v in errs.items()) + f"; {elapsed:.1f}s"
    report(capsys, 4, "gradients vs central differences <= 1e-5", ok, detail)


def test_c05_global_convergence(capsys):
    parts = []
    ok = True
    for name in DESK + ("burgers-8192-L1", "burgers-8192-L2", "semilinear-256-b0.01"):
        rep, wall = bench(name)
        good = rep.converged and rep.h <= 1e-7 and (name not in DESK or wall < 120.0)
        ok &= good
        parts.append(f"{name}: h={rep.h:.1e} in {wall:.1f}s{'' if good else ' (!)'}")
    report(capsys, 5, "global convergence to h <= 1e-7", ok, "; ".join(parts))


def test_c06_multilevel_speedup(capsys):
    it = {name: fine_iterations(bench(name)[0]) for name in
          ("burgers-2048-L1", "burgers-2048-L2", "burgers-8192-L1", "burgers-8192-L2", "pinn-L1", "pinn-L2")}
    conv = all(bench(name)[0].converged for name in it)
    b2048 = it["burgers-2048-L2"] <= 0.5 * it["burgers-2048-L1"]
    b8192 = it["burgers-8192-L2"] <= 0.5 * it["burgers-8192-L1"]
    pinn = it["pinn-L2"] <= 0.7 * it["pinn-L1"]
    ok = conv and b2048 and b8192 and pinn
    detail = (f"Burgers 2048 {it['burgers-2048-L2']} vs {it['burgers-2048-L1']}, "
              f"Burgers 8192 {it['burgers-8192-L2']} vs {it['burgers-8192-L1']} (need <= 0.5x); "
              f"PINN {it['pinn-L2']} vs {it['pinn-L1']} (need <= 0.7x)")
    report(capsys, 6, "multilevel reduces fine-level iterations", ok, detail)


def test_c07_monotone_decrease(capsys):
    bad = []
    n_seq = 0
    for name in BENCHMARKS:
        rep, _ = bench(name)
        trace = rep.result.trace
        top = [s for s in trace.sequences if s.parent is None]
        if len(top) != 1 or np.any(np.diff(top[0].accepted_values) > 0):
            bad.append(f"{name}: fine values increase")
        for s in trace.sequences:
            if s.parent is None:
                continue
            n_seq += 1
            if s.successes < 1:
                bad.append(f"{name}: coarse sequence {s.index} without success")
            if np.any(np.diff(s.accepted_values) > 0):
                bad.append(f"{name}: coarse sequence {s.index} increases")
    ok = not bad
    detail = f"{len(BENCHMARKS)} runs, {n_seq} coarse sequences" + ("" if ok else "; " + "; ".join(bad[:5]))
    report(capsys, 7, "monotone accepted values and successful coarse sequences", ok, detail)


def test_c08_box_feasibility_and_sparsity(capsys):
    parts = []
    ok = True
    support = {}
    for name in ("semilinear-64-b0.01", "semilinear-64-b0.05", "semilinear-256-b0.01"):
        z = bench(name)[0].result.x
        inside = bool(np.all(z >= -25.0) and np.all(z <= 25.0))
        ok &= inside
        support[name] = float(np.mean(z != 0))
        parts.append(f"{name}: z in [{z.min():.6g}, {z.max():.6g}], support {support[name]:.3f}")
    ok &= support["semilinear-64-b0.05"] <= support["semilinear-64-b0.01"]
    report(capsys, 8, "controls within [-25, 25] and sparser for larger beta", ok, "; ".join(parts))


def test_c09_spg_oracle(capsys):
    rng = np.random.default_rng(9)
    t_start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        M = rng.normal(size=(5, 5))
        A = M @ M.T + 0.1 * np.eye(5)
        g = rng.normal(size=5)
        x0 = rng.normal(size=5)
        phi = L1(rng.uniform(0.05, 1.0))
        B = Curvature(lambda v, A=A: A @ v, Counters())
        res = spg_solve(g, B, phi, x0, np.inf, SPGParams(maxit=5000))

        def model(x):
            s = x - x0
            return g @ s + 0.5 * s @ A @ s + phi.value(x)

        L = np.linalg.eigvalsh(A).max()
        y = x0.copy()
        for _ in range(100_000):
            y_new = phi.prox(1.0 / L, y - (g + A @ (y - x0)) / L)
            if np.array_equal(y_new, y):
                break
            y = y_new
        worst = max(worst, abs(model(res.x) - model(y)))
    elapsed = time.perf_counter() - t_start
    ok = worst <= 1e-6 and elapsed < 10.0
    report(capsys, 9, "SPG matches proximal-gradient oracle to 1e-6", ok, f"max gap {worst:.1e}, {elapsed:.2f}s")


def test_c10_determinism(capsys, tmp_path):
    texts = []
    for i in range(2):
        cfg = config("burgers-2048-L2")
        cfg.out_dir = str(tmp_path / f"run{i}")
        run(cfg)
        texts.append((tmp_path / f"run{i}" / "history.csv").read_bytes())
    sem = [run(config("semilinear-64-b0.05")).history.encode() for _ in range(2)]
    ok = texts[0] == texts[1] and sem[0] == sem[1]
    report(capsys, 10, "byte-identical history for identical config and seed", ok,
           f"Burgers {len(texts[0])} bytes, semilinear {len(sem[0])} bytes")
