"""Acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line with the measured numbers. Run with

    pytest tests/test_acceptance.py -v -s
"""
import csv
import math
import time

import numpy as np
import pytest

from volmbo import config as cfgmod
from volmbo.cli import Context, run_experiment, run_trial
from volmbo.data import accuracy, three_moons, torus
from volmbo.graph import knn_graph, partial_spectrum
from volmbo.init import FidelitySet, laguerre_init
from volmbo.kernels import clustering_delta, make_positive_taylor, make_rank_k_heat
from volmbo.mbo import (MboConfig, increment_sparsity_check,
                        minimizing_movement_violations, run, sqrt_h_scaling_probe)
from volmbo.oracle import dense_heat, exhaustive_optimum, mincostflow_optimum
from volmbo.osstat import (Clustering, Exact, Interval, assignment_reduce,
                           error_energy, induced_clustering,
                           satisfies_interval_criterion, solve_equality,
                           solve_interval)


_capture = {}


@pytest.fixture(autouse=True)
def _uncaptured(capsys):
    _capture["capsys"] = capsys
    yield
    _capture.clear()


def report(name, ok, detail):
    with _capture["capsys"].disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


def objective(u, assign):
    return math.fsum(u[np.arange(len(assign)), assign])


def diffused_scores(rng, n, P):
    """Positive Taylor diffusion of a random clustering on a random k-NN graph."""
    X = rng.normal(size=(n, 2))
    w = knn_graph(X, min(8, n - 1))
    k = make_positive_taylor(w, 1.0, 2)
    return k.apply(Clustering(rng.integers(0, P, n), P)).values


def instance(rng, i, n_lo, n_hi, p_hi):
    n = int(rng.integers(n_lo, n_hi + 1))
    P = int(rng.integers(2, p_hi + 1))
    u = rng.dirichlet(np.ones(P), size=n) if i % 2 == 0 else diffused_scores(rng, n, P)
    return u, n, P


def random_interval(rng, n, P):
    while True:
        L = rng.integers(0, n // P + 2, P)
        U = L + rng.integers(0, n // 2 + 2, P)
        if L.sum() <= n <= U.sum():
            return Interval(L, U)


# -- solvers -------------------------------------------------------------------------

def test_solver_exactness_equality():
    rng = np.random.default_rng(101)
    solver_time = 0.0
    worst, bad_vol, bad_acct = 0.0, 0, 0
    for i in range(200):
        u, n, P = instance(rng, i, 4, 500, 8)
        V = rng.multinomial(n, np.ones(P) / P)
        t = time.perf_counter()
        os_, stats = solve_equality(u, V)
        solver_time += time.perf_counter() - t
        bad_vol += not np.array_equal(os_.induced.volumes, V)
        bad_acct += 2 * stats.outer_iterations != stats.initial_error
        worst = max(worst, abs(objective(u, os_.assign) - mincostflow_optimum(u, V)))
    mismatch = 0
    for i in range(50):
        u, n, P = instance(rng, i, 4, 12, 4)
        V = rng.multinomial(n, np.ones(P) / P)
        os_, _ = solve_equality(u, V)
        _, best = exhaustive_optimum(u, V)
        mismatch += objective(u, os_.assign) != objective(u, best)
    ok = worst <= 1e-9 and bad_vol == 0 and mismatch == 0 and solver_time < 10
    assert report("solver exactness (equality)", ok,
                  f"max |obj - flow| = {worst:.2e} over 200, volume misses {bad_vol}, "
                  f"exhaustive mismatches {mismatch}/50, solver time {solver_time:.2f} s")


def test_solver_exactness_interval():
    rng = np.random.default_rng(202)
    solver_time = 0.0
    worst, bad_bounds, bad_crit = 0.0, 0, 0
    for i in range(200):
        u, n, P = instance(rng, i, 4, 500, 8)
        LU = random_interval(rng, n, P)
        t = time.perf_counter()
        os_, _ = solve_interval(u, LU)
        solver_time += time.perf_counter() - t
        vol = os_.induced.volumes
        bad_bounds += not LU.admits(vol)
        bad_crit += not satisfies_interval_criterion(os_.m, vol, LU, os_.tol)
        worst = max(worst, abs(objective(u, os_.assign) - mincostflow_optimum(u, LU)))
    mismatch = 0
    for i in range(50):
        u, n, P = instance(rng, i, 4, 12, 4)
        LU = random_interval(rng, n, P)
        os_, _ = solve_interval(u, LU)
        _, best = exhaustive_optimum(u, LU)
        mismatch += objective(u, os_.assign) != objective(u, best)
    ok = (worst <= 1e-9 and bad_bounds == 0 and bad_crit == 0 and mismatch == 0
          and solver_time < 10)
    assert report("solver exactness (interval)", ok,
                  f"max |obj - flow| = {worst:.2e} over 200, bound misses {bad_bounds}, "
                  f"criterion failures {bad_crit}, exhaustive mismatches {mismatch}/50, "
                  f"solver time {solver_time:.2f} s")


def test_scalar_reduction():
    rng = np.random.default_rng(303)
    bad, on_value = 0, 0
    for _ in range(100):
        n = int(rng.integers(2, 400))
        t = rng.random(n)
        u = np.stack([t, 1.0 - t], axis=1)
        V1 = int(rng.integers(1, n))
        os_, _ = solve_equality(u, [V1, n - V1])
        m = os_.m + (1.0 - os_.m.sum()) / 2  # the representative with m1 + m2 = 1
        desc = np.sort(t)[::-1]
        # m1 is a V1-th order statistic: it separates the V1 largest values from the rest
        inside = desc[V1] <= m[0] <= desc[V1 - 1]
        top = np.array_equal(np.sort(t[os_.assign == 0]), np.sort(desc[:V1]))
        bad += not (inside and top)
        on_value += m[0] in (desc[V1 - 1], desc[V1])
    assert report("scalar reduction", bad == 0,
                  f"{100 - bad}/100 instances give the sorting order statistic "
                  f"({on_value} land on a data value)")


def test_iteration_accounting():
    rng = np.random.default_rng(404)
    eq_bad, eq_total = 0, 0
    for i in range(200):
        u, n, P = instance(rng, i, 4, 300, 8)
        V = rng.multinomial(n, np.ones(P) / P)
        m0 = rng.normal(0.0, 0.2, P) if i % 3 == 0 else None
        os_, stats = solve_equality(u, V, m0)
        E0 = error_energy(induced_clustering(u, np.zeros(P) if m0 is None else m0), V)
        eq_bad += not (2 * stats.outer_iterations == stats.initial_error == E0)
        eq_total += 1
    paths, gain_bad = 0, 0
    for i in range(200):
        u, n, P = instance(rng, i, 20, 300, 6)
        V = rng.multinomial(n, np.ones(P) / P)
        LU = Interval(np.maximum(V - n // 10, 0), V + n // 10)
        os_, _ = solve_interval(u, LU, np.zeros(P), debug=True)
        for p in os_.trace:
            if p.phase != "interval":
                continue
            paths += 1
            gain_bad += not (p.predicted_gain > 0 and abs(p.gain - p.predicted_gain) <= 1e-9)
    ok = eq_bad == 0 and gain_bad == 0 and paths > 0
    assert report("iteration accounting", ok,
                  f"outer = E(m0)/2 on {eq_total - eq_bad}/{eq_total} equality solves; "
                  f"{paths - gain_bad}/{paths} interval swap-paths gain m_root - m_leaf > 0")


# -- MBO dynamics ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def dynamics_runs():
    """Runs of compliant kernels (symmetric, PSD, A1 = 1) on two data sets."""
    runs = []
    ds = three_moons(seed=0)
    w = knn_graph(ds.cloud, 10)
    spec = partial_spectrum(w, 80, "combinatorial")
    V = ds.class_sizes
    for h in (1.0, 3.0, 10.0):
        k = make_rank_k_heat(spec, h, 80)
        assert k.compliant
        for s in range(5):
            Y = FidelitySet.sample(ds.labels, 5, np.random.default_rng(500 + s))
            runs.append(("three_moons", k, run(MboConfig(k, V, fidelity=Y),
                                               laguerre_init(w, Y, V))[1]))
    tor = torus(2000, 2, seed=0)
    wt = knn_graph(tor.cloud, 10)
    spec_t = partial_spectrum(wt, 80, "combinatorial")
    for h in (1.0, 3.0, 10.0):
        k = make_rank_k_heat(spec_t, h, 80)
        assert k.compliant
        for s in range(3):
            rng = np.random.default_rng(600 + s)
            c0 = Clustering(rng.permutation(tor.labels), 2)
            runs.append(("torus", k, run(MboConfig(k, tor.class_sizes), c0)[1]))
    return runs


def test_energy_dissipation(dynamics_runs):
    steps, rises, mm = 0, 0, 0
    worst = -np.inf
    for _, k, tr in dynamics_runs:
        dE = np.diff(tr.energies())
        steps += dE.size
        rises += int(np.sum(dE > 1e-9))
        worst = max(worst, float(dE.max()))
        mm += len(minimizing_movement_violations(tr, k.h))
    ok = rises == 0 and mm == 0
    assert report("energy dissipation", ok,
                  f"{len(dynamics_runs)} runs, {steps} steps, {rises} energy increases "
                  f"(largest step change {worst:.2e}), {mm} minimizing-movement violations")


def test_l1_increment_bound(dynamics_runs):
    checked, failed, ratio = 0, 0, 0.0
    sets = set()
    for name, k, tr in dynamics_runs:
        rep = increment_sparsity_check(tr, k)
        checked += len(rep["per_iteration"])
        failed += rep["status"] != "pass"
        sets.add(name)
        if rep["bound"] > 0:
            ratio = max(ratio, rep["max_increment"] / rep["bound"])
    ok = failed == 0 and sets == {"three_moons", "torus"}
    assert report("L1 increment bound", ok,
                  f"{checked} iterations on {sorted(sets)}, {failed} failing runs, "
                  f"max increment / bound = {ratio:.3f}")


# -- kernels ----------------------------------------------------------------------

def test_kernel_correctness():
    rng = np.random.default_rng(707)
    worst_heat = 0.0
    for n in (6, 12, 25, 40, 50):
        for h in (0.3, 2.0, 10.0):
            w = knn_graph(rng.normal(size=(n, 3)), min(5, n - 1))
            if w.components() != 1:
                w = knn_graph(rng.normal(size=(n, 3)), n - 1)
            k = make_rank_k_heat(partial_spectrum(w, n), h, n)
            worst_heat = max(worst_heat, float(np.max(np.abs(k.dense() - dense_heat(w, h)))))
    w = knn_graph(rng.normal(size=(120, 3)), 8)
    spec = partial_spectrum(w, 40)
    from volmbo.kernels import make_squared_rw
    kernels = [make_rank_k_heat(spec, 2.0, 40), make_positive_taylor(w, 1.0, 2),
               make_positive_taylor(w, 1.0, 6), make_squared_rw(w),
               make_squared_rw(w, "squared_twice"), make_squared_rw(w, "shifted", 0.0)]
    worst_inc = 0.0
    for case in range(1000):
        k = kernels[case % len(kernels)]
        P = int(rng.integers(2, 6))
        old = Clustering(rng.integers(0, P, 120), P)
        a = old.assign.copy()
        move = rng.random(120) < rng.choice([0.01, 0.05, 0.3])
        a[move] = rng.integers(0, P, int(move.sum()))
        new = Clustering(a, P)
        inc = k.apply_incremental(k.apply(old), clustering_delta(new, old)).values
        worst_inc = max(worst_inc, float(np.max(np.abs(inc - k.apply(new).values))))
    ok = worst_heat <= 1e-8 and worst_inc <= 1e-12
    assert report("kernel correctness", ok,
                  f"rank-N heat vs dense {worst_heat:.2e} (N <= 50); "
                  f"incremental vs full {worst_inc:.2e} over 1000 cases")


# -- benchmarks ----------------------------------------------------------------------

def moons_config(labels):
    return cfgmod.resolve({
        "dataset": {"kind": "three_moons"},
        "kernel": {"kind": "squared_rw"},
        "mbo": {"temperature": 1.0},
        "experiment": {"trials": 20, "labels_per_class": labels, "seed": 0},
    })


def test_three_moons_accuracy():
    t0 = time.perf_counter()
    five = run_experiment(moons_config(5))
    elapsed = time.perf_counter() - t0
    one = run_experiment(moons_config(1))
    m5, s5 = 100 * five["mean_accuracy"], 100 * five["sd_accuracy"]
    m1, s1 = 100 * one["mean_accuracy"], 100 * one["sd_accuracy"]
    ok = m5 >= 94.0 and elapsed < 60 and m1 >= 80.0
    assert report("Three Moons accuracy", ok,
                  f"5 labels {m5:.2f} ({s5:.2f}) in {elapsed:.1f} s; "
                  f"1 label {m1:.2f} ({s1:.2f}); 20 trials each")


def test_opt_digits_accuracy(tmp_path):
    datasets = pytest.importorskip("sklearn.datasets")
    digits = datasets.load_digits()
    path = tmp_path / "optdigits.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for x, y in zip(digits.data, digits.target):
            w.writerow([int(v) for v in x] + [int(y)])
    t0 = time.perf_counter()
    cfg = cfgmod.resolve({
        "dataset": {"kind": "delimited", "path": str(path)},
        "kernel": {"kind": "squared_rw_twice"},
        "init": {"h": 100.0},
        "experiment": {"trials": 10, "labels_per_class": 5, "seed": 0},
    })
    ctx = Context(cfg)
    kernel = ctx.kernel()
    acc = [run_trial(ctx, t, kernel)["accuracy"] for t in range(10)]
    init_acc = {}
    for kind in ("voronoi", "diffusion"):
        ctx.cfg["init"]["kind"] = kind
        vals = []
        for t in range(10):
            Y = ctx.fidelity(cfg["experiment"]["seed"] + t)
            c = ctx.initial(Y, ctx.constraints())
            vals.append(accuracy(c, ctx.data.labels, mask=Y.pinned(ctx.data.n) < 0))
        init_acc[kind] = 100 * float(np.mean(vals))
    elapsed = time.perf_counter() - t0
    mean = 100 * float(np.mean(acc))
    ok = mean >= 93.0 and elapsed < 300 and init_acc["diffusion"] > init_acc["voronoi"]
    assert report("Opt-Digits accuracy", ok,
                  f"N = {ctx.data.n}, MBO {mean:.2f} ({100 * np.std(acc):.2f}) over 10 trials; "
                  f"init diffusion {init_acc['diffusion']:.2f} vs Voronoi "
                  f"{init_acc['voronoi']:.2f}; {elapsed:.1f} s")


# -- speed-up probe ----------------------------------------------------------------

def test_sqrt_h_speedup():
    t0 = time.perf_counter()
    ds = torus(5000, 2, seed=0)
    X = ds.cloud.points
    a = np.arctan2(X[:, 1], X[:, 0])
    b = np.arctan2(X[:, 3], X[:, 2])
    w = knn_graph(ds.cloud, 10)
    spec = partial_spectrum(w, 400)
    rng = np.random.default_rng(0)
    inits = []
    for _ in range(6):  # elliptic discs on the torus, one run each
        ca, cb = rng.uniform(0, 2 * np.pi, 2)
        R = rng.uniform(0.8, 2.0)
        da = np.angle(np.exp(1j * (a - ca)))
        db = np.angle(np.exp(1j * (b - cb)))
        inits.append(Clustering((da ** 2 + (db / 1.3) ** 2 < R * R).astype(int), 2))
    h0 = 40.0
    grid = [h0 / 4, h0 / 2, h0, 2 * h0]
    rep = sqrt_h_scaling_probe(lambda h: make_rank_k_heat(spec, h, 400), grid, None,
                               inits, iterations=15)
    elapsed = time.perf_counter() - t0
    ok = 0.25 <= rep.slope <= 0.9 and rep.bad_fraction <= 0.2
    means = ", ".join(f"{e:.2f}" for e in rep.mean_initial_error)
    assert report("sqrt(h) speed-up", ok,
                  f"slope {rep.slope:.3f} over h = {grid} (mean E(m0) {means}); "
                  f"bad iterations {rep.bad_iterations}/{rep.total_iterations}; {elapsed:.1f} s")


# -- assignment problem ------------------------------------------------------------

def test_assignment_reduction():
    rng = np.random.default_rng(1111)
    bad = 0
    for _ in range(100):
        n = int(rng.integers(1, 51))
        C = rng.integers(0, 100, (n, n)).astype(np.float64)
        perm = assignment_reduce(C)
        got = C[np.arange(n), perm].sum()
        want = -mincostflow_optimum(-C, np.ones(n, np.int64))
        bad += not (sorted(perm) == list(range(n)) and got == want)
    assert report("assignment reduction", bad == 0, f"{100 - bad}/100 integer cost matrices match")
