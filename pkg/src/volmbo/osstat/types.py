"""Value types shared by the solvers."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConstraintError


@dataclass(frozen=True)
class Clustering:
    """Dense encoding of a one-hot assignment of ``n`` points to ``P`` clusters."""

    assign: np.ndarray
    P: int

    def __post_init__(self):
        a = np.ascontiguousarray(self.assign, dtype=np.int64)
        if a.ndim != 1:
            raise ValueError("assign must be one-dimensional")
        if a.size and (a.min() < 0 or a.max() >= self.P):
            raise ValueError("cluster index out of range")
        object.__setattr__(self, "assign", a)

    @property
    def n(self) -> int:
        return self.assign.shape[0]

    @property
    def volumes(self) -> np.ndarray:
        return np.bincount(self.assign, minlength=self.P).astype(np.int64)

    def onehot(self) -> np.ndarray:
        chi = np.zeros((self.n, self.P))
        chi[np.arange(self.n), self.assign] = 1.0
        return chi


@dataclass(frozen=True)
class Exact:
    V: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.V)
        if V.ndim != 1 or not np.all(np.isfinite(V)) or np.any(V != np.round(V)):
            raise ConstraintError("volumes must be a vector of integers")
        if np.any(V < 0):
            raise ConstraintError("volumes must be nonnegative")
        object.__setattr__(self, "V", V.astype(np.int64))

    @property
    def P(self) -> int:
        return self.V.shape[0]

    def check(self, n: int):
        if int(self.V.sum()) != n:
            raise ConstraintError(
                f"volumes sum to {int(self.V.sum())} but there are {n} points")

    def admits(self, volumes) -> bool:
        return bool(np.array_equal(np.asarray(volumes), self.V))


@dataclass(frozen=True)
class Interval:
    L: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.L)
        U = np.asarray(self.U)
        for name, a in (("L", L), ("U", U)):
            if a.ndim != 1 or not np.all(np.isfinite(a)) or np.any(a != np.round(a)):
                raise ConstraintError(f"{name} must be a vector of integers")
        if L.shape != U.shape:
            raise ConstraintError("L and U differ in length")
        if np.any(L < 0):
            raise ConstraintError("lower bounds must be nonnegative")
        if np.any(L > U):
            raise ConstraintError("some lower bound exceeds its upper bound")
        object.__setattr__(self, "L", L.astype(np.int64))
        object.__setattr__(self, "U", U.astype(np.int64))

    @property
    def P(self) -> int:
        return self.L.shape[0]

    def check(self, n: int):
        if int(self.L.sum()) > n or int(self.U.sum()) < n:
            raise ConstraintError(
                f"bounds admit totals in [{int(self.L.sum())}, {int(self.U.sum())}]"
                f" but there are {n} points")

    def admits(self, volumes) -> bool:
        v = np.asarray(volumes)
        return bool(np.all(v >= self.L) and np.all(v <= self.U))


@dataclass
class SolverStats:
    outer_iterations: int = 0
    equality_iterations: int = 0
    interval_iterations: int = 0
    heap_ops: int = 0
    growth_steps: int = 0
    initial_error: int = 0
    wall_time: float = 0.0
    backend: str = ""


@dataclass(frozen=True)
class SwapPath:
    """One executed swap-path: nodes run from the leaf back to the stop node."""

    iteration: int
    phase: str
    nodes: tuple
    points: tuple
    tree: tuple
    m_before: tuple
    m_after: tuple
    gain: float
    predicted_gain: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__)


@dataclass
class OrderStatistic:
    m: np.ndarray
    induced: Clustering
    kind: str
    tol: float = 0.0
    trace: list = field(default_factory=list)

    @property
    def assign(self) -> np.ndarray:
        return self.induced.assign

    def trace_jsonl(self) -> str:
        return "".join(p.to_json() + "\n" for p in self.trace)
