"""Command line entry point.

    volmbo run       --config exp.toml --out results/
    volmbo solve     scores.bin --constraints exact --volumes 3,4,5 --out sol/
    volmbo probe     --config exp.toml --out probe/
    volmbo spectrum  --config exp.toml --out spec/
    volmbo gen-moons --seed 0 --out data/

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 infeasible
constraints.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import struct
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from . import config as cfgmod
from ._jit import backend
from .data import (LabeledDataset, accuracy, load_delimited, load_embedding,
                   load_idx, three_moons, torus)
from .errors import ConfigError, DataFormatError, ParameterError, VolmboError
from .graph import knn_graph, partial_spectrum, write_weights
from .init import FidelitySet, diffusion_init, laguerre_init, voronoi_init
from .kernels import (make_positive_taylor, make_rank_k_heat, make_squared_rw)
from .mbo import MboConfig, Temperature, run, sqrt_h_scaling_probe
from .osstat import Exact, Interval, solve_equality, solve_interval

SCORES_HEADER = struct.Struct("<II")


# scores files: u32 N, u32 P, then N*P little-endian f64 row-major

def write_scores(path, u):
    u = np.ascontiguousarray(u, dtype="<f8")
    if u.ndim != 2:
        raise ParameterError("scores must be an N x P matrix")
    with open(path, "wb") as fh:
        fh.write(SCORES_HEADER.pack(*u.shape))
        fh.write(u.tobytes())


def read_scores(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(SCORES_HEADER.size)
        if len(head) != SCORES_HEADER.size:
            raise DataFormatError(f"{path}: truncated header at byte {len(head)}")
        n, P = SCORES_HEADER.unpack(head)
        body = fh.read()
    if n == 0 or P == 0:
        raise DataFormatError(f"{path}: empty score matrix ({n} x {P})")
    want = 8 * n * P
    if len(body) != want:
        raise DataFormatError(f"{path}: expected {want} payload bytes after the header, "
                              f"found {len(body)}")
    u = np.frombuffer(body, dtype="<f8").reshape(n, P).astype(np.float64)
    if not np.all(np.isfinite(u)):
        raise DataFormatError(f"{path}: non-finite score")
    return u


def _int_list(text, name):
    try:
        return np.array([int(t) for t in text.split(",")], dtype=np.int64)
    except ValueError:
        raise ConfigError(f"--{name}: expected comma separated integers") from None


def _float_list(text, name):
    try:
        return np.array([float(t) for t in text.split(",")], dtype=np.float64)
    except ValueError:
        raise ConfigError(f"--{name}: expected comma separated numbers") from None


# pipeline

def build_dataset(cfg) -> LabeledDataset:
    d = cfg["dataset"]
    kind = d["kind"]
    if kind == "three_moons":
        return three_moons(d["n_per_moon"], d["noise_sd"], d["ambient_dim"], seed=d["seed"])
    if kind == "torus":
        return torus(d["n"], d["classes"], seed=d["seed"])
    if kind == "delimited":
        return load_delimited(d["path"], d["label_column"], d["delimiter"], d["skip_header"])
    if kind == "idx":
        return load_idx(d["path"], d["labels_path"])
    return load_embedding(d["path"], d["labels_path"])


def spectrum_size(cfg, n):
    K = cfg["graph"]["spectrum_K"] or int(20 * math.log(n))
    return max(2, min(K, n))


class Context:
    """Dataset, graph and kernels shared by all trials of one config."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.data = build_dataset(cfg)
        self.w = knn_graph(self.data.cloud, cfg["graph"]["k"])
        self.w.require_connected()
        self._spectrum = None

    @property
    def spectrum(self):
        if self._spectrum is None:
            K = spectrum_size(self.cfg, self.w.n)
            self._spectrum = partial_spectrum(self.w, K, self.cfg["graph"]["laplacian"])
        return self._spectrum

    def kernel(self, kind=None, h=None):
        k = self.cfg["kernel"]
        kind = kind or k["kind"]
        h = k["h"] if h is None else h
        if kind == "squared_rw":
            return make_squared_rw(self.w, "plain")
        if kind == "squared_rw_twice":
            return make_squared_rw(self.w, "squared_twice")
        if kind == "shifted_squared_rw":
            return make_squared_rw(self.w, "shifted", k["r"])
        if kind == "rank_k_heat":
            return make_rank_k_heat(self.spectrum, h, self.spectrum.count)
        return make_positive_taylor(self.w, h, k["J"])

    def constraints(self):
        V = self.data.class_sizes
        m = self.cfg["mbo"]
        if m["constraints"] == "exact":
            return Exact(V)
        s = m["slack"]
        return Interval(np.maximum(V - s, 0), V + s)

    def fidelity(self, seed):
        rng = np.random.default_rng(seed)
        return FidelitySet.sample(self.data.labels, self.cfg["experiment"]["labels_per_class"], rng)

    def initial(self, Y, constraints):
        i = self.cfg["init"]
        if i["kind"] == "voronoi":
            return voronoi_init(self.w, Y, i["metric"], self.data.cloud.points)
        if i["kind"] == "diffusion":
            heat = make_rank_k_heat(self.spectrum, i["h"], self.spectrum.count)
            return diffusion_init(heat, Y, constraints)
        return laguerre_init(self.w, Y, constraints, i["metric"], self.data.cloud.points)


def run_trial(ctx: Context, trial: int, kernel=None, keep_trace=False) -> dict:
    cfg = ctx.cfg
    seed = cfg["experiment"]["seed"] + trial
    t0 = time.perf_counter()
    Y = ctx.fidelity(seed)
    cons = ctx.constraints()
    c0 = ctx.initial(Y, cons)
    m = cfg["mbo"]
    temp = None
    if m["temperature"] > 0:
        temp = Temperature(m["temperature"], m["temperature_iterations"], seed)
    mc = MboConfig(kernel or ctx.kernel(), cons, stop_eps=m["stop_eps"],
                   max_iters=m["max_iters"], temperature=temp,
                   warm_start=m["warm_start"], fidelity=Y)
    c, trace = run(mc, c0)
    mask = Y.pinned(ctx.data.n) < 0
    out = {
        "trial": trial, "seed": seed,
        "accuracy": accuracy(c, ctx.data.labels, mask=mask),
        "init_accuracy": accuracy(c0, ctx.data.labels, mask=mask),
        "iterations": len(trace.records),
        "energy": trace.summary()["final_energy"] if temp is None else trace.best_energy,
        "wall_s": time.perf_counter() - t0,
    }
    if keep_trace:
        out["trace"] = json.loads(trace.to_json())
    return out


_WORKER = {}


def _worker_init(cfg):
    _WORKER["ctx"] = Context(cfg)


def _worker_trial(args):
    trial, keep = args
    ctx = _WORKER["ctx"]
    return run_trial(ctx, trial, keep_trace=keep)


def run_experiment(cfg, keep_traces=False) -> dict:
    """All trials of ``cfg``; the record embeds the resolved config."""
    trials = cfg["experiment"]["trials"]
    workers = min(cfg["experiment"]["workers"], trials)
    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(cfg,)) as pool:
            rows = list(pool.map(_worker_trial, [(t, keep_traces) for t in range(trials)]))
    else:
        ctx = Context(cfg)
        kernel = ctx.kernel()
        rows = [run_trial(ctx, t, kernel, keep_traces) for t in range(trials)]
    rows.sort(key=lambda r: r["trial"])
    acc = np.array([r["accuracy"] for r in rows])
    return {
        "config": cfg,
        "backend": backend(),
        "trials": rows,
        "mean_accuracy": float(np.mean(acc)),
        "sd_accuracy": float(np.std(acc)),
        "wall_s": time.perf_counter() - t0,
    }


def probe_scaling(cfg) -> dict:
    """E(m^0) over a grid of h for an h-dependent kernel, one run per trial."""
    kind = cfg["kernel"]["kind"]
    if kind not in ("rank_k_heat", "positive_taylor"):
        raise ConfigError(f"kernel.kind = {kind!r} has no time step; "
                          "probe needs rank_k_heat or positive_taylor")
    ctx = Context(cfg)
    h0 = cfg["kernel"]["h"]
    grid = cfg["probe"]["h_grid"] or [h0 / 4, h0 / 2, h0, 2 * h0]
    cons = ctx.constraints()
    fids, inits = [], []
    for t in range(cfg["experiment"]["trials"]):
        Y = ctx.fidelity(cfg["experiment"]["seed"] + t)
        fids.append(Y)
        inits.append(ctx.initial(Y, cons))
    rep = sqrt_h_scaling_probe(lambda h: ctx.kernel(kind, h), grid, cons, inits,
                               cfg["probe"]["iterations"], fids,
                               cfg["mbo"]["warm_start"])
    ratios = [b / a if a > 0 else float("inf")
              for a, b in zip(rep.mean_initial_error, rep.mean_initial_error[1:])]
    return {"config": cfg, "h": rep.h, "mean_initial_error": rep.mean_initial_error,
            "ratios": ratios, "slope": rep.slope, "bad_fraction": rep.bad_fraction,
            "bad_iterations": rep.bad_iterations, "total_iterations": rep.total_iterations,
            "delta": rep.delta, "rows": rep.rows}


# output helpers

def _out_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


# verbs

def _apply_overrides(cfg_raw_path, args):
    cfg = cfgmod.load(cfg_raw_path)
    raw = {s: dict(b) for s, b in cfg.items()}
    if getattr(args, "seed", None) is not None:
        raw["experiment"]["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        raw["experiment"]["trials"] = args.trials
    if getattr(args, "labels_per_class", None) is not None:
        raw["experiment"]["labels_per_class"] = args.labels_per_class
    if getattr(args, "kernel", None) is not None:
        raw["kernel"]["kind"] = args.kernel
    if getattr(args, "h", None) is not None:
        raw["kernel"]["h"] = args.h
    if getattr(args, "temperature", None) is not None:
        raw["mbo"]["temperature"] = args.temperature
    if getattr(args, "constraints", None) is not None:
        raw["mbo"]["constraints"] = args.constraints
    return cfgmod.resolve(raw)


def cmd_run(args):
    cfg = _apply_overrides(args.config, args)
    res = run_experiment(cfg, keep_traces=args.traces)
    out = _out_dir(args.out)
    with open(os.path.join(out, "config.toml"), "w") as fh:
        fh.write(cfgmod.dumps(cfg))
    _dump_json(os.path.join(out, "results.json"), res)
    _write_csv(os.path.join(out, "trials.csv"),
               ["trial", "seed", "accuracy", "init_accuracy", "iterations", "energy", "wall_s"],
               [[r[k] for k in ("trial", "seed", "accuracy", "init_accuracy",
                                "iterations", "energy", "wall_s")] for r in res["trials"]])
    row = [cfg["dataset"]["kind"], cfg["kernel"]["kind"],
           cfg["experiment"]["labels_per_class"], cfg["experiment"]["trials"],
           f"{100 * res['mean_accuracy']:.2f}", f"{100 * res['sd_accuracy']:.2f}"]
    _write_csv(os.path.join(out, "table.csv"),
               ["dataset", "kernel", "labels_per_class", "trials", "mean", "sd"], [row])
    print(f"{row[0]} {row[1]} labels={row[2]} trials={row[3]}: "
          f"{row[4]} ({row[5]})  [{res['wall_s']:.1f} s]")
    return 0


def cmd_solve(args):
    u = read_scores(args.scores)
    n, P = u.shape
    m0 = _float_list(args.m0, "m0") if args.m0 else None
    if m0 is not None and m0.shape != (P,):
        raise ConfigError(f"--m0 needs {P} entries")
    if args.constraints == "exact":
        if not args.volumes:
            raise ConfigError("--volumes is required with --constraints exact")
        cons = Exact(_int_list(args.volumes, "volumes"))
        os_, stats = solve_equality(u, cons, m0)
    else:
        if not (args.lower and args.upper):
            raise ConfigError("--lower and --upper are required with --constraints interval")
        cons = Interval(_int_list(args.lower, "lower"), _int_list(args.upper, "upper"))
        os_, stats = solve_interval(u, cons, m0)
    out = _out_dir(args.out)
    _write_csv(os.path.join(out, "assignment.csv"), ["point_id", "cluster"],
               zip(range(n), os_.assign.tolist()))
    _write_csv(os.path.join(out, "m.csv"), ["cluster", "m"],
               zip(range(P), os_.m.tolist()))
    print(json.dumps(asdict(stats)))
    return 0


def cmd_probe(args):
    cfg = _apply_overrides(args.config, args)
    rep = probe_scaling(cfg)
    out = _out_dir(args.out)
    keys = ["h", "run", "iteration", "initial_error", "m_deviation",
            "outer_iterations", "wall_ms"]
    _write_csv(os.path.join(out, "probe.csv"), keys,
               [[r[k] for k in keys] for r in rep["rows"]])
    summary = {k: v for k, v in rep.items() if k != "rows"}
    _dump_json(os.path.join(out, "probe.json"), summary)
    for h, e in zip(rep["h"], rep["mean_initial_error"]):
        print(f"h={h:g}  mean E(m0)={e:.3f}")
    print(f"slope={rep['slope']:.3f}  bad={rep['bad_iterations']}/{rep['total_iterations']}")
    return 0


def cmd_spectrum(args):
    cfg = _apply_overrides(args.config, args)
    ctx = Context(cfg)
    spec = ctx.spectrum
    out = _out_dir(args.out)
    res = spec.residuals(ctx.w)
    _write_csv(os.path.join(out, "eigenvalues.csv"), ["index", "eigenvalue", "residual"],
               zip(range(spec.count), spec.values.tolist(), res.tolist()))
    np.save(os.path.join(out, "eigenvectors.npy"), spec.vectors)
    write_weights(os.path.join(out, "weights.bin"), ctx.w)
    print(f"N={ctx.w.n} K={spec.count} lambda_2={spec.values[1]:.6g} "
          f"lambda_K={spec.values[-1]:.6g} max residual={res.max():.2e}")
    return 0


def cmd_gen_moons(args):
    ds = three_moons(args.n_per_moon, args.noise, args.dim, seed=args.seed or 0)
    out = _out_dir(args.out)
    path = os.path.join(out, "three_moons.csv")
    _write_csv(path, [f"x{i}" for i in range(ds.cloud.dim)] + ["label"],
               (list(map(repr, p.tolist())) + [int(y)]
                for p, y in zip(ds.cloud.points, ds.labels)))
    print(path)
    return 0


def _parser():
    p = argparse.ArgumentParser(prog="volmbo", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="verb", required=True)

    def experiment_flags(sp):
        sp.add_argument("--config", help="TOML experiment file (defaults when omitted)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default=".")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--labels-per-class", type=int)
        sp.add_argument("--kernel", choices=cfgmod.CHOICES[("kernel", "kind")])
        sp.add_argument("--h", type=float)
        sp.add_argument("--temperature", type=float)
        sp.add_argument("--constraints", choices=("exact", "interval"))

    sp = sub.add_parser("run", help="semi-supervised experiment over seeded trials")
    experiment_flags(sp)
    sp.add_argument("--traces", action="store_true", help="keep per-iteration traces")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("probe", help="E(m0) against h for warm-started runs")
    experiment_flags(sp)
    sp.set_defaults(func=cmd_probe)

    sp = sub.add_parser("spectrum", help="k-NN graph and its partial spectrum")
    experiment_flags(sp)
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("solve", help="order statistic of a score file")
    sp.add_argument("scores")
    sp.add_argument("--constraints", choices=("exact", "interval"), default="exact")
    sp.add_argument("--volumes")
    sp.add_argument("--lower")
    sp.add_argument("--upper")
    sp.add_argument("--m0", help="start vector, default the center")
    sp.add_argument("--out", default=".")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("gen-moons", help="write the Three Moons sample as CSV")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=".")
    sp.add_argument("--n-per-moon", type=int, default=500)
    sp.add_argument("--noise", type=float, default=0.14)
    sp.add_argument("--dim", type=int, default=100)
    sp.set_defaults(func=cmd_gen_moons)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except VolmboError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=sys.stderr)
        return DataFormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
