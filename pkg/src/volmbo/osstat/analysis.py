"""Closed-form helpers and independent checks around order statistics."""
from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from .solver import _as_m, _as_scores, solve_equality, tolerance
from .types import Clustering, Interval


def direction(T, P: int) -> np.ndarray:
    """Search direction that lowers every m_i, i in T, against the rest.

    Pairwise differences m_j - m_i grow at unit-plus rate 1 + 1/(P-1) for
    i in T, j not in T, and stay fixed inside T. Components sum to zero.
    """
    T = sorted(set(int(t) for t in T))
    if P < 2:
        raise ParameterError("a direction needs at least two clusters")
    if not T or len(T) >= P or T[0] < 0 or T[-1] >= P:
        raise ParameterError("T must be a nonempty proper subset of the clusters")
    d = np.full(P, len(T) / (P - 1))
    d[T] -= 1.0 + 1.0 / (P - 1)
    return d


def objective(u, c) -> float:
    """sum_x u_{assign(x)}(x)."""
    a = c.assign if isinstance(c, Clustering) else np.asarray(c)
    u = np.asarray(u)
    return float(u[np.arange(u.shape[0]), a].sum())


def separation_violation(u, m, assign) -> float:
    """Largest amount by which a point sits on the wrong side of a hyperplane."""
    u = np.asarray(u, dtype=np.float64)
    a = np.asarray(assign)
    g = u - np.asarray(m)[None, :]
    own = g[np.arange(u.shape[0]), a]
    return float(max(0.0, (g.max(axis=1) - own).max())) if u.size else 0.0


def satisfies_interval_criterion(m, volumes, LU: Interval, tol: float = 0.0) -> bool:
    """Ordered-coordinate optimality test for interval bounds.

    True when some pivot value splits the clusters so that every cluster
    whose m is above it sits at its upper bound and every cluster below it
    sits at its lower bound.
    """
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(volumes)
    for theta in m:
        above = m > theta + tol
        below = m < theta - tol
        if np.all(v[above] == LU.U[above]) and np.all(v[below] == LU.L[below]):
            return True
    return False


def lagrange_multiplier(m, h: float) -> np.ndarray:
    """(2/sqrt h)(m + c - 1/P) with c chosen so that the entries of m + c sum to 1."""
    if not h > 0:
        raise ParameterError("h must be positive")
    m = np.asarray(m, dtype=np.float64)
    P = m.shape[0]
    c = (1.0 - m.sum()) / P
    lam = (2.0 / np.sqrt(h)) * (m + c - 1.0 / P)
    return lam - lam.mean()


def variational_objective(u, m, V) -> float:
    """F(m) = sum_x max_i (u_i(x) - m_i) + V . m, minimized by V-order statistics."""
    u = _as_scores(u)
    m = _as_m(m, u.shape[1])
    V = np.asarray(getattr(V, "V", V), dtype=np.float64)
    return float(np.max(u - m[None, :], axis=1).sum() + V @ m)


def assignment_reduce(cost) -> np.ndarray:
    """Minimum-cost perfect matching of rows to columns.

    Row x becomes a point with scores -cost[x, :], every column a cluster of
    volume one; ``perm[x]`` is the column matched to row x.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ParameterError(f"cost matrix must be square, got shape {cost.shape}")
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, np.int64)
    os_, _ = solve_equality(-cost, np.ones(n, np.int64))
    return os_.assign.copy()


__all__ = ["direction", "objective", "separation_violation",
           "satisfies_interval_criterion", "lagrange_multiplier",
           "variational_objective", "assignment_reduce", "tolerance"]
