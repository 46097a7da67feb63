"""Volume-constrained thresholding with pinned (labelled) points."""
from __future__ import annotations

import numpy as np

from .errors import ConstraintError
from .osstat import (Clustering, Exact, Interval, solve_equality,
                     solve_interval)


def _free_constraints(constraints, counts):
    if isinstance(constraints, Interval):
        U = constraints.U - counts
        if np.any(U < 0):
            raise ConstraintError("more labelled points than an upper bound allows")
        return Interval(np.maximum(constraints.L - counts, 0), U)
    V = constraints.V - counts
    if np.any(V < 0):
        raise ConstraintError("more labelled points than a cluster volume allows")
    return Exact(V)


def threshold(u, constraints, pinned=None, m0=None, *, debug=False):
    """Optimal constrained clustering of scores ``u`` with some points fixed.

    ``pinned`` is a length-N array holding the class of each labelled point
    and -1 elsewhere. Pinned points are left out of the solve and their
    counts are taken off the volumes. Returns the full clustering, the
    order statistic of the free points and the solver statistics.
    """
    u = np.asarray(u, dtype=np.float64)
    n, P = u.shape
    if not isinstance(constraints, (Exact, Interval)):
        constraints = Exact(constraints)
    if pinned is None or not np.any(np.asarray(pinned) >= 0):
        solve = solve_interval if isinstance(constraints, Interval) else solve_equality
        os_, stats = solve(u, constraints, m0, debug=debug)
        return os_.induced, os_, stats
    pinned = np.asarray(pinned, dtype=np.int64)
    fixed = pinned >= 0
    counts = np.bincount(pinned[fixed], minlength=P)
    sub = _free_constraints(constraints, counts)
    solve = solve_interval if isinstance(sub, Interval) else solve_equality
    os_, stats = solve(u[~fixed], sub, m0, debug=debug)
    assign = pinned.copy()
    assign[~fixed] = os_.assign
    return Clustering(assign, P), os_, stats
