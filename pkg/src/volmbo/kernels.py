"""Diffusion operators A(h) for the thresholding scheme.

Every kernel acts on N x P label matrices column by column and carries four
structural flags, each checked on construction by randomized probes:

``symmetric``
    <Ax, y> = <x, Ay> in the standard inner product.
``symmetric_in_degree_inner_product``
    the same identity in <x, y>_D = sum d(x) x y.
``conserves_mass``
    A1 = 1.
``positive_semidefinite``
    <x, Ax> >= 0 in the inner product in which A is symmetric (the standard
    one when both apply).

The energy-dissipation guarantee of the scheme needs ``symmetric`` and
``positive_semidefinite``; the increment bound additionally needs
``conserves_mass``. Use :attr:`DiffusionKernel.dissipative` and
:attr:`DiffusionKernel.compliant`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _sparse
from .errors import InputError, KernelError, ParameterError
from .graph import SparseWeights, Spectrum
from .osstat.types import Clustering

PROBES = 20
PROBE_TOL = 1e-8
FLAG_NAMES = ("symmetric", "symmetric_in_degree_inner_product",
              "conserves_mass", "positive_semidefinite")


@dataclass(frozen=True)
class DiffusedLabels:
    values: np.ndarray
    h: float
    kernel_id: str

    @property
    def shape(self):
        return self.values.shape


def _as_matrix(labels, n):
    if isinstance(labels, Clustering):
        X = labels.onehot()
    elif isinstance(labels, DiffusedLabels):
        X = labels.values
    else:
        X = np.asarray(labels, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != n:
        raise InputError(f"label matrix must have {n} rows, got shape {X.shape}")
    return X


def clustering_delta(new: Clustering, old: Clustering):
    """Triplets (rows, cols, vals) of chi_new - chi_old, sorted by (col, row)."""
    if new.n != old.n or new.P != old.P:
        raise InputError("clusterings differ in size")
    moved = np.flatnonzero(new.assign != old.assign)
    rows = np.concatenate([moved, moved])
    cols = np.concatenate([new.assign[moved], old.assign[moved]])
    vals = np.concatenate([np.ones(moved.size), -np.ones(moved.size)])
    return _sorted_triplets(rows, cols, vals)


def _sorted_triplets(rows, cols, vals):
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.lexsort((rows, cols))
    return rows[order], cols[order], vals[order]


def _as_triplets(delta, shape):
    if sp.issparse(delta):
        coo = sp.coo_matrix(delta)
        if coo.shape != shape:
            raise InputError(f"delta has shape {coo.shape}, expected {shape}")
        return _sorted_triplets(coo.row, coo.col, coo.data)
    rows, cols, vals = delta
    rows, cols, vals = _sorted_triplets(rows, cols, vals)
    if rows.size and (rows.min() < 0 or rows.max() >= shape[0]
                      or cols.min() < 0 or cols.max() >= shape[1]):
        raise InputError("delta index out of range")
    return rows, cols, vals


class DiffusionKernel:
    """Base class; subclasses provide ``_apply`` and ``_apply_delta``."""

    kind = "abstract"

    def __init__(self, n, degrees, scaling, h, params):
        self.n = n
        self.degrees = degrees
        self.scaling = float(scaling)
        self.h = float(h)
        self.params = dict(params)
        self.flags = {}
        if not self.scaling > 0:
            raise ParameterError("energy scaling must be positive")

    @property
    def kernel_id(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({inner})"

    @property
    def dissipative(self) -> bool:
        return self.flags["symmetric"] and self.flags["positive_semidefinite"]

    @property
    def compliant(self) -> bool:
        return self.dissipative and self.flags["conserves_mass"]

    def apply(self, labels) -> DiffusedLabels:
        X = _as_matrix(labels, self.n)
        return DiffusedLabels(self._apply(X), self.h, self.kernel_id)

    def apply_incremental(self, prev, delta) -> DiffusedLabels:
        """A chi_new from A chi_old and the sparse increment chi_new - chi_old."""
        U = prev.values if isinstance(prev, DiffusedLabels) else np.asarray(prev)
        if U.ndim != 2 or U.shape[0] != self.n:
            raise InputError("previous product has the wrong shape")
        rows, cols, vals = _as_triplets(delta, U.shape)
        out = U.copy()
        if rows.size:
            self._apply_delta(rows, cols, vals, out)
        return DiffusedLabels(out, self.h, self.kernel_id)

    def dense(self) -> np.ndarray:
        return self._apply(np.eye(self.n))

    # flag probes ----------------------------------------------------------

    def _probe_flags(self, declared, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((self.n, PROBES))
        Y = rng.standard_normal((self.n, PROBES))
        AX = self._apply(X)
        AY = self._apply(Y)
        d = self.degrees

        def close(a, b, scale):
            return bool(np.all(np.abs(a - b) <= PROBE_TOL * scale))

        def norms(A, B):
            return np.linalg.norm(A, axis=0) * np.linalg.norm(B, axis=0)

        dX, dAX = d[:, None] * X, d[:, None] * AX
        sym = close(np.einsum("ij,ij->j", AX, Y), np.einsum("ij,ij->j", X, AY),
                    norms(AX, Y) + norms(X, AY))
        symd = close(np.einsum("ij,ij->j", dAX, Y), np.einsum("ij,ij->j", dX, AY),
                     norms(dAX, Y) + norms(dX, AY))
        one = self._apply(np.ones((self.n, 1)))[:, 0]
        mass = bool(np.max(np.abs(one - 1.0)) <= PROBE_TOL)
        ip = np.ones(self.n) if sym or not symd else d
        quad = np.einsum("ij,ij->j", ip[:, None] * X, AX)
        psd = bool(np.all(quad >= -PROBE_TOL * np.maximum(
            np.einsum("ij,ij->j", ip[:, None] * X, X), 1.0)))
        found = {"symmetric": sym, "symmetric_in_degree_inner_product": symd,
                 "conserves_mass": mass, "positive_semidefinite": psd}
        for name in FLAG_NAMES:
            want = declared.get(name)
            if want is True and not found[name]:
                raise KernelError(f"{self.kind}: declared flag {name} failed its probe")
            self.flags[name] = found[name] if want is None else bool(want) and found[name]

    def __repr__(self):
        on = [k for k in FLAG_NAMES if self.flags.get(k)]
        return f"<{self.kernel_id} s_A={self.scaling:g} flags={on}>"


class RankKHeat(DiffusionKernel):
    """Truncated heat semigroup sum_k exp(-h lambda_k) <v_k, .> v_k."""

    kind = "rank_k_heat"

    def __init__(self, spec: Spectrum, h: float, K: int):
        if not 1 <= K <= spec.count:
            raise ParameterError(f"K must lie in [1, {spec.count}]")
        if h < 0:
            raise ParameterError("h must be nonnegative")
        n = spec.vectors.shape[0]
        super().__init__(n, spec.degrees, math.sqrt(h) if h > 0 else 1.0, h,
                         {"K": K, "h": h, "laplacian": spec.laplacian})
        self.V = np.ascontiguousarray(spec.vectors[:, :K])
        self.weights = np.ascontiguousarray(spec.weights, dtype=np.float64)
        self.coef = np.exp(-h * spec.values[:K])
        self._probe_flags({"symmetric_in_degree_inner_product": spec.laplacian == "random_walk"
                           or None, "conserves_mass": True,
                           "positive_semidefinite": True,
                           "symmetric": spec.laplacian == "combinatorial" or None})

    def _apply(self, X):
        return self.V @ (self.coef[:, None] * (self.V.T @ (self.weights[:, None] * X)))

    def _apply_delta(self, rows, cols, vals, out):
        Z = np.zeros((self.V.shape[1], out.shape[1]))
        _sparse.project_rows(self.V, self.weights, rows, cols, vals, Z)
        out += self.V @ (self.coef[:, None] * Z)


class _SparseChain(DiffusionKernel):
    """A = factors[-1] @ ... @ factors[0] (+ shift * I), each factor CSC."""

    def _setup(self, factors, shift=0.0):
        self.factors = [sp.csc_matrix(f) for f in factors]
        self.shift = float(shift)

    def _apply(self, X):
        Y = X
        for F in self.factors:
            Y = F @ Y
        if self.shift:
            Y = Y + self.shift * X
        return np.asarray(Y)

    def _apply_delta(self, rows, cols, vals, out):
        first = self.factors[0]
        if len(self.factors) == 1:
            _sparse.accumulate_columns(first.indptr, first.indices, first.data,
                                       rows, cols, vals, out)
        else:
            Z = np.zeros_like(out)
            _sparse.accumulate_columns(first.indptr, first.indices, first.data,
                                       rows, cols, vals, Z)
            for F in self.factors[1:]:
                Z = F @ Z
            out += Z
        if self.shift:
            _sparse.scatter_add(out, rows, cols, self.shift * vals)


def _transition(w: SparseWeights) -> sp.csr_matrix:
    w.require_positive_degrees()
    return sp.csr_matrix(sp.diags(1.0 / w.degrees) @ w.matrix)


class PositiveTaylor(_SparseChain):
    """Normalized even-order Taylor polynomial of exp(h D^-1 W)."""

    kind = "positive_taylor"
    MATERIALIZE_MAX_J = 4

    def __init__(self, w: SparseWeights, h: float, J: int):
        if not isinstance(J, (int, np.integer)) or J < 2 or J % 2:
            raise ParameterError("the positive Taylor kernel needs an even order J >= 2")
        if not h > 0:
            raise ParameterError("h must be positive")
        super().__init__(w.n, w.degrees, math.sqrt(h), h, {"J": J, "h": h})
        T = _transition(w)
        c = np.array([h ** j / math.factorial(j) for j in range(J + 1)])
        c /= c.sum()
        self.coefficients = c
        self.T = T
        if J <= self.MATERIALIZE_MAX_J:
            A = sp.identity(w.n, format="csr") * c[0]
            P = sp.identity(w.n, format="csr")
            for j in range(1, J + 1):
                P = P @ T
                A = A + c[j] * P
            self._setup([A])
            self.materialized = True
        else:
            self._setup([T.tocsc()])
            self.materialized = False
        self._probe_flags({"symmetric_in_degree_inner_product": True,
                           "conserves_mass": True, "positive_semidefinite": True})

    def _horner(self, X):
        c = self.coefficients
        Y = c[-1] * X
        for j in range(len(c) - 2, -1, -1):
            Y = self.T @ Y + c[j] * X
        return Y

    def _apply(self, X):
        return super()._apply(X) if self.materialized else self._horner(X)

    def _apply_delta(self, rows, cols, vals, out):
        if self.materialized:
            return super()._apply_delta(rows, cols, vals, out)
        D = sp.csc_matrix((vals, (rows, cols)), shape=out.shape)
        out += np.asarray(self._horner(D.toarray()))


class AlternatingTaylor(_SparseChain):
    """Plain Taylor polynomial of exp(-h (I - D^-1 W)); diagnostic only."""

    kind = "taylor"

    def __init__(self, w: SparseWeights, h: float, J: int):
        super().__init__(w.n, w.degrees, math.sqrt(h), h, {"J": J, "h": h})
        L = sp.identity(w.n, format="csr") - _transition(w)
        A = sp.identity(w.n, format="csr")
        P = sp.identity(w.n, format="csr")
        for j in range(1, J + 1):
            P = P @ L
            A = A + ((-h) ** j / math.factorial(j)) * P
        self._setup([A])
        self._probe_flags({"symmetric_in_degree_inner_product": True,
                           "conserves_mass": True})


def smallest_eigenvalue(A) -> float:
    """lambda_min of a symmetric sparse matrix (dense for small sizes)."""
    n = A.shape[0]
    if n <= 2000:
        return float(np.linalg.eigvalsh(A.toarray())[0])
    return float(spla.eigsh(A, k=1, which="SA", tol=1e-10,
                            return_eigenvectors=False)[0])


class SquaredRW(_SparseChain):
    """Gram matrix (D^-1 W)^T D^-1 W, optionally squared or shifted by -r I."""

    kind = "squared_rw"

    def __init__(self, w: SparseWeights, variant: str = "plain", r=0.1):
        if variant not in ("plain", "squared_twice", "shifted"):
            raise ParameterError(f"unknown squared random-walk variant {variant!r}")
        T = _transition(w)
        G = sp.csr_matrix(T.T @ T)
        G = sp.csr_matrix((G + G.T) * 0.5)
        params = {"variant": variant}
        self.lambda_min = None
        if variant == "shifted":
            if r == "auto":
                self.lambda_min = smallest_eigenvalue(G)
                r = self.lambda_min
            r = float(r)
            if r < 0:
                raise ParameterError("shift r must be nonnegative")
            params["r"] = r
        super().__init__(w.n, w.degrees, 1.0, 1.0, params)
        if variant == "plain":
            self._setup([G])
            declared = {"symmetric": True, "positive_semidefinite": True}
        elif variant == "squared_twice":
            self._setup([G, G])
            declared = {"symmetric": True, "positive_semidefinite": True}
        else:
            self._setup([G], shift=-r)
            if self.lambda_min is None:
                self.lambda_min = smallest_eigenvalue(G)
            declared = {"symmetric": True,
                        "positive_semidefinite": r <= self.lambda_min + PROBE_TOL}
            self.r = r
        self._probe_flags(declared)


def make_rank_k_heat(spec: Spectrum, h: float, K: int) -> RankKHeat:
    return RankKHeat(spec, h, K)


def make_positive_taylor(w: SparseWeights, h: float, J: int = 2) -> PositiveTaylor:
    return PositiveTaylor(w, h, J)


def make_squared_rw(w: SparseWeights, variant: str = "plain", r=0.1) -> SquaredRW:
    return SquaredRW(w, variant, r)


def make_taylor(w: SparseWeights, h: float, J: int, *, diagnostic: bool = False):
    """Alternating-sign Taylor kernel; loses positivity or semidefiniteness."""
    if not diagnostic:
        raise ParameterError("the alternating Taylor kernel is diagnostic only; "
                             "pass diagnostic=True")
    return AlternatingTaylor(w, h, J)
