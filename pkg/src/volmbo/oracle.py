"""Reference solvers used as correctness anchors.

None of these are fast. They share no code with :mod:`volmbo.osstat`: the
exhaustive search enumerates every clustering, and the flow solver handles the
transportation problem (points to clusters with capacity bounds) by successive
shortest paths with node potentials.
"""
from __future__ import annotations

import heapq

import numpy as np
import scipy.sparse as sp

from ._jit import njit
from .errors import ConstraintError, ParameterError, StructuralError
from .osstat.types import Exact, Interval

EXHAUSTIVE_MAX_N = 12
EXHAUSTIVE_MAX_P = 4
DENSE_HEAT_MAX_N = 200


def _bounds(constraints, P):
    if isinstance(constraints, Interval):
        L, U = constraints.L, constraints.U
    else:
        V = constraints.V if isinstance(constraints, Exact) else np.asarray(constraints)
        L = U = np.asarray(V, dtype=np.int64)
    if len(L) != P:
        raise ConstraintError(f"{len(L)} bounds given for {P} clusters")
    return np.asarray(L, np.int64), np.asarray(U, np.int64)


def exhaustive_optimum(u, constraints):
    """Best objective and the first optimal clustering in base-P counting order."""
    u = np.asarray(u, dtype=np.float64)
    n, P = u.shape
    if n > EXHAUSTIVE_MAX_N or P > EXHAUSTIVE_MAX_P:
        raise ParameterError(
            f"exhaustive search limited to N<={EXHAUSTIVE_MAX_N}, P<={EXHAUSTIVE_MAX_P}")
    L, U = _bounds(constraints, P)
    total = P ** n
    weights = P ** np.arange(n, dtype=np.int64)
    best, best_assign = -np.inf, None
    chunk = 1 << 18
    rows = np.arange(n)
    for start in range(0, total, chunk):
        k = np.arange(start, min(total, start + chunk), dtype=np.int64)
        digits = (k[:, None] // weights[None, :]) % P
        vol = np.stack([(digits == i).sum(axis=1) for i in range(P)], axis=1)
        ok = np.all((vol >= L) & (vol <= U), axis=1)
        if not ok.any():
            continue
        val = u[rows[None, :], digits].sum(axis=1)
        val[~ok] = -np.inf
        j = int(np.argmax(val))
        if val[j] > best:
            best, best_assign = float(val[j]), digits[j].copy()
    if best_assign is None:
        raise ConstraintError("no clustering satisfies the constraints")
    return best, best_assign


@njit
def _add_edge(head, nxt, to, cap, cost, first, ne, a, b, c, w):
    to[ne] = b
    cap[ne] = c
    cost[ne] = w
    nxt[ne] = first[a]
    first[a] = ne
    to[ne + 1] = a
    cap[ne + 1] = 0
    cost[ne + 1] = -w
    nxt[ne + 1] = first[b]
    first[b] = ne + 1
    return ne + 2


@njit
def _ssp(u, L, U):
    # nodes: points 0..n-1, clusters n..n+P-1, sink T, super source, super sink
    n, P = u.shape
    T = n + P
    SS = T + 1
    TT = T + 2
    nv = T + 3
    me = 2 * (n + n * P + 2 * P + 1)
    to = np.zeros(me, np.int64)
    nxt = np.full(me, -1, np.int64)
    cap = np.zeros(me, np.int64)
    cost = np.zeros(me)
    first = np.full(nv, -1, np.int64)
    head = first
    ne = 0
    for x in range(n):
        ne = _add_edge(head, nxt, to, cap, cost, first, ne, SS, x, 1, 0.0)
    for x in range(n):
        for i in range(P):
            ne = _add_edge(head, nxt, to, cap, cost, first, ne, x, n + i, 1, -u[x, i])
    sumL = 0
    for i in range(P):
        ne = _add_edge(head, nxt, to, cap, cost, first, ne, n + i, T, U[i] - L[i], 0.0)
        ne = _add_edge(head, nxt, to, cap, cost, first, ne, n + i, TT, L[i], 0.0)
        sumL += L[i]
    ne = _add_edge(head, nxt, to, cap, cost, first, ne, T, TT, n - sumL, 0.0)

    # initial potentials by Bellman-Ford (the network is acyclic with positive caps)
    pot = np.full(nv, np.inf)
    pot[SS] = 0.0
    for _ in range(nv):
        changed = False
        for a in range(nv):
            if pot[a] == np.inf:
                continue
            e = first[a]
            while e >= 0:
                if cap[e] > 0 and pot[a] + cost[e] < pot[to[e]]:
                    pot[to[e]] = pot[a] + cost[e]
                    changed = True
                e = nxt[e]
        if not changed:
            break

    flow = 0
    total = 0.0
    dist = np.empty(nv)
    prev_e = np.empty(nv, np.int64)
    done = np.zeros(nv, np.bool_)
    while flow < n:
        for a in range(nv):
            dist[a] = np.inf
            prev_e[a] = -1
            done[a] = False
        dist[SS] = 0.0
        pq = [(0.0, SS)]
        while len(pq) > 0:
            d, a = heapq.heappop(pq)
            if done[a]:
                continue
            done[a] = True
            e = first[a]
            while e >= 0:
                if cap[e] > 0:
                    b = to[e]
                    rc = cost[e] + pot[a] - pot[b]
                    if rc < 0.0:
                        rc = 0.0
                    nd = d + rc
                    if nd < dist[b]:
                        dist[b] = nd
                        prev_e[b] = e
                        heapq.heappush(pq, (nd, b))
                e = nxt[e]
        if dist[TT] == np.inf:
            return flow, total
        for a in range(nv):
            if dist[a] < np.inf:
                pot[a] += dist[a]
        # bottleneck is 1: every path starts with a unit source arc
        b = TT
        while b != SS:
            e = prev_e[b]
            cap[e] -= 1
            cap[e ^ 1] += 1
            total += cost[e]
            b = to[e ^ 1]
        flow += 1
    return flow, total


def mincostflow_optimum(u, constraints) -> float:
    """Maximum of sum_x u_{assign(x)}(x) under exact or interval cluster sizes.

    Interval bounds use the circulation transform: each cluster sends its
    lower bound straight to a super sink and the slack U - L to the ordinary
    sink, which forwards the remaining N - sum(L) units.
    """
    u = np.ascontiguousarray(u, dtype=np.float64)
    n, P = u.shape
    L, U = _bounds(constraints, P)
    if np.any(L > U) or L.sum() > n or U.sum() < n:
        raise ConstraintError("infeasible capacity bounds")
    flow, total = _ssp(u, L, U)
    if flow < n:
        raise ConstraintError("flow network admits no complete assignment")
    return -float(total)


def _dense(w):
    mat = getattr(w, "matrix", w)
    return mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=np.float64)


def dense_heat(w, h: float) -> np.ndarray:
    """exp(-h (I - D^-1 W)) from a full symmetric eigendecomposition."""
    W = _dense(w)
    n = W.shape[0]
    if n > DENSE_HEAT_MAX_N:
        raise ParameterError(f"dense heat kernel limited to N<={DENSE_HEAT_MAX_N}")
    if h < 0:
        raise ParameterError("h must be nonnegative")
    d = W.sum(axis=1)
    if np.any(d <= 0):
        raise StructuralError("isolated vertex")
    s = 1.0 / np.sqrt(d)
    Lsym = np.eye(n) - s[:, None] * W * s[None, :]
    lam, phi = np.linalg.eigh((Lsym + Lsym.T) / 2)
    core = (phi * np.exp(-h * lam)) @ phi.T
    return s[:, None] * core * np.sqrt(d)[None, :]
