"""Exact order-statistic solvers for the volume-constrained thresholding step."""
from __future__ import annotations

import time

import numpy as np

from .. import _jit
from ..errors import ConstraintError, ConvergenceError, InputError
from . import _core
from .types import (Clustering, Exact, Interval, OrderStatistic, SolverStats,
                    SwapPath)


def _as_scores(u) -> np.ndarray:
    u = np.ascontiguousarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] < 1:
        raise InputError(f"scores must be an (n, P) array, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InputError("scores contain NaN or infinite values")
    return u


def _as_m(m0, P) -> np.ndarray:
    if m0 is None:
        return np.zeros(P)
    m = np.array(m0, dtype=np.float64).reshape(-1)
    if m.shape[0] != P:
        raise InputError(f"m0 has length {m.shape[0]}, expected {P}")
    if not np.all(np.isfinite(m)):
        raise InputError("m0 contains NaN or infinite values")
    return m


def tolerance(u, m0=None) -> float:
    """Hyperplane membership tolerance, relative to the size of ``u``.

    A start vector far larger than ``u`` also widens it, since rounding in
    the moving thresholds scales with ``m``.
    """
    scale = float(np.max(np.abs(u))) if np.size(u) else 0.0
    if m0 is not None and np.size(m0):
        m0 = np.asarray(m0, dtype=np.float64)
        scale = max(scale, float(np.max(np.abs(m0 - m0.mean()))))
    return 1e-9 * scale


def induced_clustering(u, m) -> Clustering:
    """Assign each point to argmax_i u_i(x) - m_i (lowest index on ties)."""
    u = _as_scores(u)
    m = _as_m(m, u.shape[1])
    return Clustering(_core.induced_assign(u, m), u.shape[1])


def error_energy(c: Clustering, V) -> int:
    """Total violation sum_i |vol_i - V_i| of exact volume constraints."""
    if isinstance(V, Interval):
        raise ConstraintError("error energy is defined for exact constraints only")
    if not isinstance(V, Exact):
        V = Exact(V)
    if V.P != c.P:
        raise ConstraintError("constraint length differs from cluster count")
    return int(np.abs(c.volumes - V.V).sum())


def feasible_seed_for_interval(u, LU: Interval, m0=None) -> np.ndarray:
    """Exact volumes inside ``[L, U]`` close to the volumes induced by ``m0``.

    The induced volumes are clamped into the bounds and the remaining
    surplus or deficit is spread in proportion to the available room, with
    largest remainders (lowest index on ties) absorbing the rounding.
    """
    u = _as_scores(u)
    n = u.shape[0]
    LU.check(n)
    vol = induced_clustering(u, m0).volumes
    V = np.clip(vol, LU.L, LU.U)
    r = n - int(V.sum())
    if r == 0:
        return V
    room = (LU.U - V) if r > 0 else (V - LU.L)
    r = abs(r)
    share = r * room / room.sum()
    base = np.floor(share).astype(np.int64)
    left = r - int(base.sum())
    order = np.lexsort((np.arange(len(share)), -(share - base)))
    base[order[:left]] += 1
    return V + base if n > int(V.sum()) else V - base


def _trace_buffers(debug, n, P):
    cap = 2 * n + 2 if debug else 1
    width = P if debug else 1
    return (np.full((cap, 2, width + 1), -1, np.int64),
            np.zeros((cap, width), np.bool_),
            np.zeros((cap, 2, width)),
            np.zeros((cap, 2)),
            np.zeros((cap, 2), np.int64))


def _collect_trace(bufs, count):
    path, tree, mm, gain, meta = bufs
    out = []
    for it in range(count):
        s = int(meta[it, 1])
        out.append(SwapPath(
            iteration=it,
            phase="equality" if meta[it, 0] == 0 else "interval",
            nodes=tuple(int(k) for k in path[it, 0, :s + 1]),
            points=tuple(int(x) for x in path[it, 1, :s]),
            tree=tuple(int(k) for k in np.flatnonzero(tree[it])),
            m_before=tuple(float(v) for v in mm[it, 0]),
            m_after=tuple(float(v) for v in mm[it, 1]),
            gain=float(gain[it, 0]),
            predicted_gain=float(gain[it, 1]),
        ))
    return out


class _State:
    def __init__(self, u, m0, debug):
        self.u = u
        n, P = u.shape
        self.m = m0.copy()
        self.assign = _core.induced_assign(u, self.m)
        self.vol = np.bincount(self.assign, minlength=P).astype(np.int64)
        self.heap, self.hsize, self.pos = _core.build_queues(u, self.assign)
        self.tol = tolerance(u, m0)
        self.counters = np.zeros(_core.N_COUNTERS, np.int64)
        self.debug = bool(debug)
        self.bufs = _trace_buffers(debug, n, P)

    def run(self, kernel, *bounds):
        status = kernel(self.u, *bounds, self.m, self.assign, self.vol,
                        self.heap, self.hsize, self.pos, self.tol,
                        self.counters, self.debug, *self.bufs)
        if status != _core.STATUS_OK:
            raise ConvergenceError(
                "no admissible hyperplane hit while a volume is still violated")
        if self.counters[_core.C_BAD_QUEUE]:
            raise ConvergenceError("hyperplane queues out of sync with the clustering")

    def finish(self, kind, stats, t0):
        c = self.counters
        stats.equality_iterations = int(c[_core.C_OUTER_EQ])
        stats.interval_iterations = int(c[_core.C_OUTER_INT])
        stats.outer_iterations = stats.equality_iterations + stats.interval_iterations
        stats.heap_ops = int(c[_core.C_HEAP_OPS])
        stats.growth_steps = int(c[_core.C_GROWTH])
        stats.wall_time = time.perf_counter() - t0
        stats.backend = _jit.backend()
        trace = _collect_trace(self.bufs, int(c[_core.C_NTRACE])) if self.debug else []
        P = self.u.shape[1]
        return OrderStatistic(self.m, Clustering(self.assign, P), kind,
                              self.tol, trace), stats


def _single_cluster(u, kind, t0):
    n = u.shape[0]
    stats = SolverStats(wall_time=time.perf_counter() - t0, backend=_jit.backend())
    return OrderStatistic(np.zeros(1), Clustering(np.zeros(n, np.int64), 1),
                          kind, tolerance(u)), stats


def solve_equality(u, V, m0=None, *, debug=False):
    """V-order statistic: an ``m`` whose induced clustering has volumes ``V``.

    The induced clustering maximizes sum_x u_{assign(x)}(x) among all
    clusterings with these volumes. ``debug`` records every swap-path and
    re-validates all hyperplane queues after each one.
    """
    t0 = time.perf_counter()
    u = _as_scores(u)
    if not isinstance(V, Exact):
        V = Exact(V)
    n, P = u.shape
    if V.P != P:
        raise ConstraintError(f"{V.P} volumes given for {P} clusters")
    V.check(n)
    m0 = _as_m(m0, P)
    if P == 1:
        return _single_cluster(u, "V", t0)
    st = _State(u, m0, debug)
    stats = SolverStats(initial_error=int(np.abs(st.vol - V.V).sum()))
    st.run(_core.equality_phase, V.V)
    return st.finish("V", stats, t0)


def solve_interval(u, LU: Interval, m0=None, *, debug=False):
    """(L, U)-order statistic: optimal clustering under interval volume bounds.

    A feasible start comes from the equality solver aimed at
    :func:`feasible_seed_for_interval`; swap-paths of strictly positive gain
    then run until the multipliers of clusters that may still grow are no
    larger than those of clusters that may still shrink.
    """
    t0 = time.perf_counter()
    u = _as_scores(u)
    n, P = u.shape
    if LU.P != P:
        raise ConstraintError(f"{LU.P} bounds given for {P} clusters")
    LU.check(n)
    m0 = _as_m(m0, P)
    if P == 1:
        return _single_cluster(u, "LU", t0)
    st = _State(u, m0, debug)
    stats = SolverStats(initial_error=int(
        np.maximum(LU.L - st.vol, 0).sum() + np.maximum(st.vol - LU.U, 0).sum()))
    seed = np.clip(st.vol, LU.L, LU.U)
    if not np.array_equal(seed, st.vol) or int(seed.sum()) != n:
        st.run(_core.equality_phase, feasible_seed_for_interval(u, LU, m0))
    st.run(_core.interval_phase, LU.L, LU.U)
    return st.finish("LU", stats, t0)
