"""Volume-feasible initial clusterings from a handful of labelled points."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph

from .data import read_label_csv, write_label_csv
from .errors import InputError, ParameterError, StructuralError
from .graph import SparseWeights
from .osstat import Clustering, induced_clustering
from .threshold import threshold


@dataclass(frozen=True)
class FidelitySet:
    """Labelled point ids, one array per class."""

    classes: tuple

    def __post_init__(self):
        cls = tuple(np.unique(np.asarray(c, dtype=np.int64)) for c in self.classes)
        allids = np.concatenate(cls) if cls else np.zeros(0, np.int64)
        if allids.size != np.unique(allids).size:
            raise InputError("a point is labelled with two classes")
        if allids.size and allids.min() < 0:
            raise InputError("negative point id in fidelity set")
        object.__setattr__(self, "classes", cls)

    @property
    def P(self) -> int:
        return len(self.classes)

    @property
    def ids(self) -> np.ndarray:
        return np.concatenate(self.classes) if self.classes else np.zeros(0, np.int64)

    def counts(self) -> np.ndarray:
        return np.array([len(c) for c in self.classes], np.int64)

    def pinned(self, n: int) -> np.ndarray:
        """Length-n array: class of each labelled point, -1 elsewhere."""
        out = np.full(n, -1, np.int64)
        for i, c in enumerate(self.classes):
            if c.size and c.max() >= n:
                raise InputError(f"labelled id {int(c.max())} out of range for {n} points")
            out[c] = i
        return out

    def require_nonempty(self):
        empty = [i for i, c in enumerate(self.classes) if c.size == 0]
        if empty:
            raise InputError(f"classes without labelled points: {empty}")

    @classmethod
    def sample(cls, labels, per_class: int, rng) -> "FidelitySet":
        """``per_class`` random points of every class (numpy Generator ``rng``)."""
        labels = np.asarray(labels)
        P = int(labels.max()) + 1
        out = []
        for i in range(P):
            members = np.flatnonzero(labels == i)
            if members.size < per_class:
                raise ParameterError(f"class {i} has only {members.size} points")
            out.append(np.sort(rng.choice(members, per_class, replace=False)))
        return cls(tuple(out))

    @classmethod
    def from_csv(cls, path, P=None) -> "FidelitySet":
        ids, classes = read_label_csv(path)
        P = int(classes.max()) + 1 if P is None else P
        return cls(tuple(ids[classes == i] for i in range(P)))

    def to_csv(self, path):
        ids = self.ids
        cl = np.concatenate([np.full(len(c), i) for i, c in enumerate(self.classes)])
        write_label_csv(path, ids, cl)


def edge_lengths(w: SparseWeights, metric: str = "neglog", points=None) -> sp.csr_matrix:
    """Edge lengths for shortest paths.

    ``neglog``: -log(w / max w) with the ratio clamped to [1e-12, 1] and the
    length floored at 1e-12 so that every edge stays an edge.
    ``euclidean``: |x - y| from the point coordinates.
    """
    W = w.matrix.tocoo()
    if metric == "neglog":
        ratio = np.clip(W.data / W.data.max(), 1e-12, 1.0)
        length = np.maximum(-np.log(ratio), 1e-12)
    elif metric == "euclidean":
        if points is None:
            raise ParameterError("euclidean edge lengths need the point coordinates")
        X = np.asarray(points)
        length = np.maximum(np.linalg.norm(X[W.row] - X[W.col], axis=1), 1e-12)
    else:
        raise ParameterError(f"unknown edge metric {metric!r}")
    return sp.csr_matrix((length, (W.row, W.col)), shape=W.shape)


def graph_distances(w: SparseWeights, Y: FidelitySet, metric: str = "neglog",
                    points=None) -> np.ndarray:
    """dist[x, i] = shortest-path length from x to the nearest point of class i."""
    Y.require_nonempty()
    G = edge_lengths(w, metric, points)
    D = np.empty((w.n, Y.P))
    for i, src in enumerate(Y.classes):
        D[:, i] = csgraph.dijkstra(G, directed=False, indices=src, min_only=True)
    if not np.all(np.isfinite(D)):
        x = int(np.flatnonzero(~np.all(np.isfinite(D), axis=1))[0])
        ncomp, comp = csgraph.connected_components(w.matrix, directed=False)
        raise StructuralError(
            f"point {x} (component {int(comp[x])} of {ncomp}) cannot reach every class")
    return D


def voronoi_init(w: SparseWeights, Y: FidelitySet, metric: str = "neglog",
                 points=None) -> Clustering:
    """Nearest-class cells, no volume control."""
    D = graph_distances(w, Y, metric, points)
    c = induced_clustering(-D, np.zeros(Y.P))
    assign = c.assign.copy()
    pin = Y.pinned(w.n)
    assign[pin >= 0] = pin[pin >= 0]
    return Clustering(assign, Y.P)


def laguerre_init(w: SparseWeights, Y: FidelitySet, constraints,
                  metric: str = "neglog", points=None) -> Clustering:
    """Laguerre cells of the labelled sets whose additive weights meet the volumes."""
    D = graph_distances(w, Y, metric, points)
    c, _, _ = threshold(-D, constraints, Y.pinned(w.n))
    return c


def delta_labels(n: int, Y: FidelitySet) -> np.ndarray:
    """Rows e_i on the points of class i, zero rows elsewhere."""
    out = np.zeros((n, Y.P))
    pin = Y.pinned(n)
    out[pin >= 0, pin[pin >= 0]] = 1.0
    return out


def diffusion_init(kernel, Y: FidelitySet, constraints=None) -> Clustering:
    """Threshold the diffused labelled points; without constraints plain argmax."""
    Y.require_nonempty()
    u = kernel.apply(delta_labels(kernel.n, Y)).values
    pin = Y.pinned(kernel.n)
    if constraints is None:
        assign = induced_clustering(u, np.zeros(Y.P)).assign.copy()
        assign[pin >= 0] = pin[pin >= 0]
        return Clustering(assign, Y.P)
    c, _, _ = threshold(u, constraints, pin)
    return c
