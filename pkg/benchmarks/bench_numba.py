"""Compare the numba kernels with the interpreted fallback.

Each backend runs in its own interpreter because the switch is read at
import time. Usage:

    python benchmarks/bench_numba.py [--n 4000] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def workloads(n, repeat):
    from volmbo import backend
    from volmbo.data import three_moons
    from volmbo.graph import knn_graph
    from volmbo.kernels import make_squared_rw
    from volmbo.oracle import mincostflow_optimum
    from volmbo.osstat import Interval, solve_equality, solve_interval

    rng = np.random.default_rng(0)
    P = 5
    u = rng.dirichlet(np.ones(P), size=n)
    V = np.bincount(rng.integers(0, P, n), minlength=P)
    LU = Interval(np.maximum(V - n // 50, 0), V + n // 50)
    ds = three_moons(n_per_moon=max(n // 3, 10), seed=0)
    w = knn_graph(ds.cloud, 10)
    kern = make_squared_rw(w)
    labels = np.eye(3)[ds.labels]
    small = rng.dirichlet(np.ones(3), size=60)

    def equality():
        return solve_equality(u, V)[0].m

    def interval():
        return solve_interval(u, LU)[0].m

    def diffuse():
        return kern.apply(labels).values

    def flow():
        return mincostflow_optimum(small, np.array([20, 20, 20]))

    out = {"backend": backend(), "n": n}
    for name, fn in [("solve_equality", equality), ("solve_interval", interval),
                     ("squared_rw_apply", diffuse), ("mincostflow_n60", flow)]:
        first = time.perf_counter()
        ref = fn()  # numba compiles (or loads its cache) here
        first = time.perf_counter() - first
        best = float("inf")
        for _ in range(repeat):
            t = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - t)
        out[name] = {"first_s": first, "best_s": best,
                     "checksum": float(np.sum(np.asarray(ref, dtype=np.float64)))}
    return out


def child(flag, n, repeat):
    env = dict(os.environ)
    if flag:
        env["VOLMBO_DISABLE_NUMBA"] = "1"
    else:
        env.pop("VOLMBO_DISABLE_NUMBA", None)
    cmd = [sys.executable, __file__, "--child", "--n", str(n), "--repeat", str(repeat)]
    res = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true")
    args = ap.parse_args()
    if args.child:
        print(json.dumps(workloads(args.n, args.repeat)))
        return
    fast = child(False, args.n, args.repeat)
    slow = child(True, args.n, args.repeat)
    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'workload':<18}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}  agree")
    for key in fast:
        if key in ("backend", "n"):
            continue
        a, b = fast[key], slow[key]
        agree = abs(a["checksum"] - b["checksum"]) <= 1e-9 * max(1.0, abs(a["checksum"]))
        print(f"{key:<18}{a['best_s']:>11.4f}s{b['best_s']:>11.4f}s"
              f"{b['best_s'] / max(a['best_s'], 1e-12):>9.1f}x  {'yes' if agree else 'NO'}")


if __name__ == "__main__":
    main()
