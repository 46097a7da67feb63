"""Similarity graphs: k-nearest-neighbour weights, Laplacians and spectra."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import (ConvergenceError, DataFormatError, InputError,
                     ParameterError, StructuralError)

BRUTE_FORCE_LIMIT = 20000
WEIGHT_MAGIC = b"VMBO-W1\x00"
_TRIPLET = np.dtype([("row", "<u4"), ("col", "<u4"), ("weight", "<f8")])


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.points, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise InputError(f"points must be an (N, D) array, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise InputError("point coordinates must be finite")
        object.__setattr__(self, "points", X)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n)


@dataclass(frozen=True)
class SparseWeights:
    """Symmetric nonnegative weight matrix with its degrees.

    ``matrix`` is CSR with sorted indices, ``matrix_csc`` the same data in
    column layout.
    """

    matrix: sp.csr_matrix
    degrees: np.ndarray = field(init=False)
    matrix_csc: sp.csc_matrix = field(init=False, repr=False)

    def __post_init__(self):
        W = sp.csr_matrix(self.matrix, dtype=np.float64)
        W.sum_duplicates()
        W.sort_indices()
        W.eliminate_zeros()
        if W.shape[0] != W.shape[1]:
            raise InputError("weight matrix must be square")
        if W.nnz and (not np.all(np.isfinite(W.data)) or W.data.min() < 0):
            raise InputError("weights must be finite and nonnegative")
        diff = abs(W - W.T)
        if diff.nnz and diff.max() > 1e-12:
            raise InputError("weight matrix is not symmetric")
        object.__setattr__(self, "matrix", W)
        object.__setattr__(self, "degrees", np.asarray(W.sum(axis=1)).ravel())
        object.__setattr__(self, "matrix_csc", W.tocsc())

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def entries(self):
        """(rows, cols, weights) of the stored nonzeros, row-major."""
        coo = self.matrix.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    def require_positive_degrees(self):
        bad = np.flatnonzero(self.degrees <= 0)
        if bad.size:
            raise StructuralError(
                f"{bad.size} isolated vertices (zero degree), first is {int(bad[0])}")

    def components(self) -> int:
        return int(csgraph.connected_components(self.matrix, directed=False)[0])

    def require_connected(self):
        self.require_positive_degrees()
        k = self.components()
        if k != 1:
            raise StructuralError(f"graph is disconnected: {k} connected components")


def _exact_sq(X, x, idx):
    diff = X[idx] - x
    return np.einsum("ij,ij->i", diff, diff)


def _neighbours_brute(X, k, slack=9, block=1024):
    n = X.shape[0]
    sqn = np.einsum("ij,ij->i", X, X)
    c = min(n - 1, k + slack)
    out = []
    for s in range(0, n, block):
        e = min(n, s + block)
        G = sqn[s:e, None] - 2.0 * X[s:e] @ X.T + sqn[None, :]
        G[np.arange(e - s), np.arange(s, e)] = np.inf
        cand = np.argpartition(G, c - 1, axis=1)[:, :c]
        for r in range(e - s):
            x = s + r
            idx = cand[r]
            d2 = _exact_sq(X, X[x], idx)
            kth = np.partition(d2, k - 1)[k - 1]
            if c < n - 1 and np.count_nonzero(d2 <= kth) >= c:
                # ties may spill past the candidate set: scan the full row
                idx = np.delete(np.arange(n), x)
                d2 = _exact_sq(X, X[x], idx)
                kth = np.partition(d2, k - 1)[k - 1]
            keep = d2 <= kth
            out.append((idx[keep], d2[keep], kth))
    return out


def _neighbours_tree(X, k):
    n = X.shape[0]
    tree = cKDTree(X)
    dist, idx = tree.query(X, k=min(n, k + 2))
    out = []
    for x in range(n):
        mask = idx[x] != x
        ix, dx = idx[x][mask], dist[x][mask]
        d2 = _exact_sq(X, X[x], ix)
        kth = np.partition(d2, k - 1)[k - 1]
        if np.count_nonzero(d2 <= kth) >= len(ix):
            ix = np.array(tree.query_ball_point(X[x], np.sqrt(kth) * (1 + 1e-9) + 1e-300))
            ix = ix[ix != x]
            d2 = _exact_sq(X, X[x], ix)
        keep = d2 <= kth
        out.append((ix[keep], d2[keep], kth))
    return out


def knn_graph(cloud, k: int) -> SparseWeights:
    """Locally scaled k-nearest-neighbour graph.

    Every point is joined to its k nearest neighbours (all of them, when
    several tie at the k-th distance d_k) with weight exp(-4|x-y|^2/d_k(x)^2);
    the directed weights are then averaged with their transposes.
    """
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    X = cloud.points
    n = cloud.n
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ParameterError("k must be a positive integer")
    if k >= n:
        raise ParameterError(f"k={k} must be smaller than the number of points {n}")
    nb = _neighbours_brute(X, k) if n < BRUTE_FORCE_LIMIT else _neighbours_tree(X, k)

    scale = np.array([t[2] for t in nb])
    zero = np.flatnonzero(scale <= 0)
    if zero.size:
        positive = [t[1][t[1] > 0] for t in nb]
        global_min = min((p.min() for p in positive if p.size), default=1.0)
        for x in zero:
            # duplicates fill the whole k-neighbourhood: fall back to the nearest
            # distinct point among the candidates, else the global minimum
            scale[x] = positive[x].min() if positive[x].size else global_min
        warnings.warn(f"{zero.size} points have zero k-NN distance; "
                      "their scale falls back to the nearest positive distance",
                      RuntimeWarning, stacklevel=2)
    rows = np.concatenate([np.full(len(t[0]), x) for x, t in enumerate(nb)])
    cols = np.concatenate([t[0] for t in nb])
    d2 = np.concatenate([t[1] for t in nb])
    w = np.exp(-4.0 * d2 / scale[rows])
    W = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
    return SparseWeights((W + W.T) * 0.5)


class RandomWalkLaplacian:
    """Sparse action of I - D^-1 W."""

    def __init__(self, w: SparseWeights):
        w.require_positive_degrees()
        self.weights = w
        inv = 1.0 / w.degrees
        self.transition = sp.csr_matrix(sp.diags(inv) @ w.matrix)
        self.shape = (w.n, w.n)

    def matvec(self, v):
        v = np.asarray(v, dtype=np.float64)
        return v - self.transition @ v

    __matmul__ = matvec

    def toarray(self):
        return np.eye(self.shape[0]) - self.transition.toarray()


def random_walk_laplacian(w: SparseWeights) -> RandomWalkLaplacian:
    return RandomWalkLaplacian(w)


@dataclass(frozen=True)
class Spectrum:
    """Smallest eigenpairs of a graph Laplacian.

    ``vectors[:, k]`` are right eigenvectors, orthonormal in the inner
    product <a, b> = sum(weights * a * b). For the random-walk Laplacian the
    weights are the degrees and ``basis_convention`` records that the
    decomposition ran on the symmetric normalized operator.
    """

    values: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    laplacian: str
    basis_convention: str
    degrees: np.ndarray

    @property
    def count(self) -> int:
        return self.values.shape[0]

    def residuals(self, w: SparseWeights) -> np.ndarray:
        op = laplacian_operator(w, self.laplacian)
        R = op(self.vectors) - self.vectors * self.values[None, :]
        return np.linalg.norm(R, axis=0) / np.linalg.norm(self.vectors, axis=0)


def laplacian_operator(w: SparseWeights, kind: str):
    """Callable V -> Delta V for the named Laplacian."""
    if kind == "random_walk":
        T = RandomWalkLaplacian(w).transition
        return lambda V: V - T @ V
    if kind == "combinatorial":
        d = w.degrees
        s = d.mean()
        return lambda V: ((d[:, None] * V if V.ndim == 2 else d * V) - w.matrix @ V) / s
    raise ParameterError(f"unknown Laplacian {kind!r}")


DENSE_LIMIT = 2500


def partial_spectrum(w: SparseWeights, K: int, laplacian: str = "random_walk",
                     tol: float = 1e-6) -> Spectrum:
    """K smallest eigenpairs of the random-walk (default) or combinatorial Laplacian.

    The combinatorial variant is (D - W) scaled by the mean degree so that its
    spectrum lives on the same scale as the normalized one.
    """
    n = w.n
    if not 1 <= K <= n:
        raise ParameterError(f"K must lie in [1, {n}]")
    w.require_connected()
    d = w.degrees
    if laplacian == "random_walk":
        s = 1.0 / np.sqrt(d)
        M = sp.identity(n, format="csr") - sp.diags(s) @ w.matrix @ sp.diags(s)
        ground = np.sqrt(d)
        weights = d.copy()
        convention = "symmetric_normalized_conjugated"
    elif laplacian == "combinatorial":
        M = (sp.diags(d) - w.matrix) / d.mean()
        ground = np.ones(n)
        weights = np.ones(n)
        convention = "symmetric"
    else:
        raise ParameterError(f"unknown Laplacian {laplacian!r}")
    M = sp.csr_matrix((M + M.T) * 0.5)
    if n <= DENSE_LIMIT or K >= n // 3:
        lam, phi = scipy.linalg.eigh(M.toarray(), subset_by_index=[0, K - 1])
    else:
        try:
            lam, phi = spla.eigsh(M, k=K, sigma=-1e-3, which="LM", tol=1e-12)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc
        order = np.argsort(lam)
        lam, phi = lam[order], phi[:, order]
    # pin the exact ground state and re-orthonormalize the rest against it
    phi[:, 0] = ground / np.linalg.norm(ground)
    phi, _ = np.linalg.qr(phi)
    phi[:, 0] = ground / np.linalg.norm(ground)
    lam = lam.copy()
    lam[0] = 0.0
    lam = np.where((lam < 0) & (lam > -1e-8), 0.0, lam)
    vectors = phi / np.sqrt(weights)[:, None] if laplacian == "random_walk" else phi
    spec = Spectrum(lam, np.ascontiguousarray(vectors), weights, laplacian,
                    convention, d.copy())
    res = spec.residuals(w)
    if np.any(res > tol):
        raise ConvergenceError(
            f"eigenpair residuals up to {res.max():.3e} exceed {tol:g} "
            f"(pair {int(np.argmax(res))})")
    return spec


def write_weights(path, w: SparseWeights):
    """Triplet file: magic, u32 n, u64 nnz, then (u32 row, u32 col, f64 weight)."""
    r, c, v = w.entries()
    rec = np.empty(len(v), dtype=_TRIPLET)
    rec["row"], rec["col"], rec["weight"] = r, c, v
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(np.array([w.n], "<u4").tobytes())
        fh.write(np.array([len(v)], "<u8").tobytes())
        fh.write(rec.tobytes())


def read_weights(path) -> SparseWeights:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != WEIGHT_MAGIC:
        raise DataFormatError(f"{path}: not a weight file (bad magic)")
    if len(raw) < 20:
        raise DataFormatError(f"{path}: truncated header")
    n = int(np.frombuffer(raw, "<u4", 1, 8)[0])
    nnz = int(np.frombuffer(raw, "<u8", 1, 12)[0])
    body = raw[20:]
    if len(body) != nnz * _TRIPLET.itemsize:
        raise DataFormatError(
            f"{path}: expected {nnz} records, found {len(body) / _TRIPLET.itemsize:g}")
    rec = np.frombuffer(body, _TRIPLET)
    if nnz and (rec["row"].max() >= n or rec["col"].max() >= n):
        raise DataFormatError(f"{path}: index out of range for n={n}")
    W = sp.csr_matrix((rec["weight"], (rec["row"], rec["col"])), shape=(n, n))
    try:
        return SparseWeights(W)
    except InputError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
