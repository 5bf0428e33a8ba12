# modules/core.py
"""
Core data types for structure learning (datasets, weight matrices, directed
graphs) and the graph evaluation metrics SHD / FDR / TPR.

Adjacency convention: ``adjacency[i, j] == 1`` means the edge i -> j, which is
the same orientation as ``W[i, j]`` in the linear model X = XW + N.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# --- Errors ---
# ----------------------------------------------------------------------
class EntDagError(Exception):
    """Base class for every error raised by the structure-learning modules."""


class DimensionMismatchError(EntDagError, ValueError):
    pass


class NonFiniteError(EntDagError, ValueError):
    pass


class CyclicGraphError(EntDagError, ValueError):
    pass


class DegenerateResidualError(EntDagError, ValueError):
    """A residual column has (numerically) zero spread."""

    def __init__(self, message: str, column: int | None = None, name: str | None = None):
        super().__init__(message)
        self.column = column
        self.name = name


# ----------------------------------------------------------------------
# --- Helpers ---
# ----------------------------------------------------------------------
def as_matrix(obj) -> np.ndarray:
    """Returns the underlying float matrix of a Dataset / WeightMatrix / ndarray."""
    if isinstance(obj, Dataset):
        return obj.values
    if isinstance(obj, WeightMatrix):
        return obj.w
    return np.asarray(obj, dtype=float)


def as_adjacency(obj) -> np.ndarray:
    if isinstance(obj, Digraph):
        return obj.adjacency
    return (np.asarray(obj) != 0).astype(np.int8)


def _check_square(a: np.ndarray, what: str) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{what} must be square, got shape {a.shape}")


# ----------------------------------------------------------------------
# --- Domain types ---
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DimensionMismatchError(f"Dataset needs an m x d matrix, got {values.ndim} dims")
        m, d = values.shape
        if m < 2 or d < 1:
            raise DimensionMismatchError(f"Dataset needs m >= 2 and d >= 1, got m={m}, d={d}")
        if not np.all(np.isfinite(values)):
            bad = sorted(set(np.argwhere(~np.isfinite(values))[:, 1].tolist()))
            raise NonFiniteError(f"Dataset has NaN/Inf entries in columns {bad}")
        names = tuple(self.names) if self.names else tuple(f"x{i}" for i in range(d))
        if len(names) != d:
            raise DimensionMismatchError(f"Got {len(names)} column names for {d} columns")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def centered(self) -> "Dataset":
        return Dataset(self.values - self.values.mean(axis=0, keepdims=True), self.names)

    def permuted(self, perm: Sequence[int]) -> "Dataset":
        perm = list(perm)
        return Dataset(self.values[:, perm], tuple(self.names[i] for i in perm))

    @classmethod
    def from_csv(cls, path: str) -> "Dataset":
        """Reads a header row of column names followed by numeric rows."""
        frame = pd.read_csv(path, encoding="utf-8")
        try:
            values = frame.to_numpy(dtype=float)
        except ValueError as e:
            raise NonFiniteError(f"Non-numeric values in {path}: {e}") from e
        logger.debug(f"Loaded dataset {path} with shape {values.shape}")
        return cls(values, tuple(str(c) for c in frame.columns))

    def to_csv(self, path: str) -> None:
        pd.DataFrame(self.values, columns=list(self.names)).to_csv(path, index=False, encoding="utf-8")


@dataclass(frozen=True)
class WeightMatrix:
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        _check_square(w, "WeightMatrix")
        if not np.all(np.isfinite(w)):
            raise NonFiniteError("WeightMatrix has NaN/Inf entries")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    def support(self) -> np.ndarray:
        return (self.w != 0).astype(np.int8)


@dataclass(frozen=True)
class Digraph:
    """A binary directed graph without self-loops; may contain cycles."""
    adjacency: np.ndarray

    def __post_init__(self):
        a = (np.asarray(self.adjacency) != 0).astype(np.int8)
        _check_square(a, "adjacency")
        if np.any(np.diag(a)):
            raise EntDagError("Self-loops are not allowed")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in np.argwhere(self.adjacency)]

    def is_acyclic(self) -> bool:
        return is_acyclic(self.adjacency)

    def as_dag(self) -> "Dag":
        return Dag(self.adjacency)

    @classmethod
    def from_edges(cls, d: int, edges: Iterable[Sequence[int]]):
        a = np.zeros((d, d), dtype=np.int8)
        for i, j in edges:
            if not (0 <= i < d and 0 <= j < d):
                raise DimensionMismatchError(f"Edge ({i}, {j}) out of range for d={d}")
            a[i, j] = 1
        return cls(a)

    def to_json(self) -> dict:
        return {"d": self.d, "edges": [list(e) for e in self.edges()]}

    @classmethod
    def from_json(cls, payload: dict):
        return cls.from_edges(int(payload["d"]), payload.get("edges", []))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2)

    @classmethod
    def load(cls, path: str):
        if not os.path.exists(path):
            raise FileNotFoundError(f"Graph file not found: {path}")
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


class Dag(Digraph):
    """Digraph with a guaranteed topological order."""

    def __post_init__(self):
        super().__post_init__()
        if not is_acyclic(self.adjacency):
            raise CyclicGraphError(f"Adjacency has a cycle: {find_cycle(self.adjacency)}")

    def topological_order(self) -> list[int]:
        return topological_order(self.adjacency)

    def parents(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[:, j])


@dataclass(frozen=True)
class GraphMetrics:
    shd: int
    fdr: float
    tpr: float
    predicted_edges: int
    true_edges: int

    def to_dict(self) -> dict:
        return {
            "shd": self.shd,
            "fdr": self.fdr,
            "tpr": self.tpr,
            "predicted_edges": self.predicted_edges,
            "true_edges": self.true_edges,
        }


# ----------------------------------------------------------------------
# --- Graph algorithms ---
# ----------------------------------------------------------------------
def topological_order(adjacency) -> list[int]:
    """Kahn's algorithm; the returned order is shorter than d iff there is a cycle."""
    a = as_adjacency(adjacency)
    _check_square(a, "adjacency")
    indegree = a.sum(axis=0).astype(int)
    ready = [j for j in range(a.shape[0]) if indegree[j] == 0]
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in np.flatnonzero(a[i]):
            indegree[j] -= 1
            if indegree[j] == 0:
                ready.append(int(j))
    return order


def is_acyclic(adjacency) -> bool:
    a = as_adjacency(adjacency)
    return len(topological_order(a)) == a.shape[0]


def find_cycle(adjacency) -> list[int] | None:
    """Returns the nodes of one directed cycle (in edge order) or None."""
    a = as_adjacency(adjacency)
    d = a.shape[0]
    color = [0] * d  # 0 unseen, 1 on stack, 2 done
    parent = [-1] * d
    for start in range(d):
        if color[start]:
            continue
        stack = [(start, iter(np.flatnonzero(a[start])))]
        color[start] = 1
        while stack:
            node, children = stack[-1]
            child = next(children, None)
            if child is None:
                color[node] = 2
                stack.pop()
                continue
            child = int(child)
            if color[child] == 0:
                parent[child] = node
                color[child] = 1
                stack.append((child, iter(np.flatnonzero(a[child]))))
            elif color[child] == 1:
                cycle = [node]
                while cycle[-1] != child:
                    cycle.append(parent[cycle[-1]])
                return cycle[::-1]
    return None


def threshold(w, omega: float) -> Digraph:
    """Keeps the entries with |w| > omega. The result may still contain cycles."""
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    w = as_matrix(w)
    _check_square(w, "weight matrix")
    a = (np.abs(w) > omega).astype(np.int8)
    np.fill_diagonal(a, 0)
    return Digraph(a)


def remove_cycles(w, graph: Digraph) -> Dag:
    """Greedily drops the smallest-|w| edge of each residual cycle until the graph is a DAG."""
    w = np.abs(as_matrix(w))
    a = np.array(graph.adjacency)
    while True:
        cycle = find_cycle(a)
        if cycle is None:
            return Dag(a)
        cycle_edges = list(zip(cycle, cycle[1:] + cycle[:1]))
        i, j = min(cycle_edges, key=lambda e: w[e])
        logger.info(f"Dropping edge {i}->{j} (|w|={w[i, j]:.4f}) to break cycle {cycle}")
        a[i, j] = 0


# ----------------------------------------------------------------------
# --- Metrics ---
# ----------------------------------------------------------------------
def _check_same_dim(est: np.ndarray, truth: np.ndarray) -> None:
    if est.shape != truth.shape:
        raise DimensionMismatchError(f"Graph dimensions differ: {est.shape} vs {truth.shape}")


def structural_hamming_distance(est, truth) -> int:
    """
    Edge insertions + deletions + reversals turning ``est`` into ``truth``.

    Each unordered node pair is compared as a whole, so a reversed edge costs 1
    (not a deletion plus an insertion). Conventions that charge 2 per reversal
    give larger values.
    """
    e, t = as_adjacency(est), as_adjacency(truth)
    _check_same_dim(e, t)
    iu = np.triu_indices(e.shape[0], k=1)
    state_e = e[iu] + 2 * e.T[iu]
    state_t = t[iu] + 2 * t.T[iu]
    return int(np.count_nonzero(state_e != state_t))


def fdr_tpr(est, truth) -> tuple[float, float]:
    """Reversed edges count as false discoveries. FDR of an empty prediction is 0."""
    e, t = as_adjacency(est), as_adjacency(truth)
    _check_same_dim(e, t)
    predicted = int(e.sum())
    true_edges = int(t.sum())
    tp = int(np.sum((e == 1) & (t == 1)))
    fdr = (predicted - tp) / predicted if predicted else 0.0
    tpr = tp / true_edges if true_edges else 1.0
    return fdr, tpr


def evaluate(est, truth) -> GraphMetrics:
    fdr, tpr = fdr_tpr(est, truth)
    return GraphMetrics(
        shd=structural_hamming_distance(est, truth),
        fdr=fdr,
        tpr=tpr,
        predicted_edges=int(as_adjacency(est).sum()),
        true_edges=int(as_adjacency(truth).sum()),
    )
