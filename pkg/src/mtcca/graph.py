"""Dependency graphs from thresholded pairwise first-order coefficients."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import FrozenSet, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, NodeSetMismatch
from .moments import Family, MtFunctionSpec, PairedSample
from .selection import SelectionConfig, select_parameters
from .solver import mtcca

Edge = Tuple[str, str]


def _edge(a: str, b: str) -> Edge:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class DependencyGraph:
    labels: Tuple[str, ...]
    edges: FrozenSet[Edge]
    lam: float
    coefficients: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        index = {name: i for i, name in enumerate(self.labels)}
        adj = np.zeros((len(self.labels),) * 2, dtype=int)
        for a, b in self.edges:
            adj[index[a], index[b]] = adj[index[b], index[a]] = 1
        return adj

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "lambda": self.lam,
            "edges": [list(e) for e in sorted(self.edges)],
            "coefficients": self.coefficients.tolist(),
        }


def _check_coefficients(coefficients, labels):
    c = np.asarray(coefficients, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] != len(labels):
        raise DimensionMismatch("coefficient matrix must be square with one row per label")
    if len(set(labels)) != len(labels):
        raise ValueError("node labels must be unique")
    if not np.allclose(c, c.T, atol=1e-12, equal_nan=True):
        raise ValueError("coefficient matrix must be symmetric")
    return c


def build_graph(coefficients, labels: Sequence[str], lam: float) -> DependencyGraph:
    """Undirected graph with an edge wherever the coefficient exceeds ``lam`` (strictly)."""
    labels = tuple(str(name) for name in labels)
    c = _check_coefficients(coefficients, labels)
    edges = frozenset(_edge(labels[i], labels[j])
                      for i, j in combinations(range(len(labels)), 2) if c[i, j] > lam)
    return DependencyGraph(labels, edges, float(lam), c.copy())


def symmetric_difference(g1: DependencyGraph, g2: DependencyGraph):
    """Edges only in ``g1`` and edges only in ``g2``."""
    if set(g1.labels) != set(g2.labels):
        raise NodeSetMismatch("graphs are defined on different node sets")
    return g1.edges - g2.edges, g2.edges - g1.edges


def edit_distance(g1: DependencyGraph, g2: DependencyGraph) -> int:
    only1, only2 = symmetric_difference(g1, g2)
    return len(only1) + len(only2)


def default_lambda_grid() -> np.ndarray:
    return np.linspace(0.0, 1.0, 101)


def closest_graph_by_edit_distance(reference: DependencyGraph, coefficients, labels,
                                   lambda_grid=None):
    """Threshold ``coefficients`` at every grid value and keep the graph
    nearest to ``reference`` in edge edit distance; ties go to the smallest
    threshold.  Returns ``(graph, distance)``."""
    grid = default_lambda_grid() if lambda_grid is None else np.sort(np.asarray(lambda_grid, float))
    best, best_d = None, None
    for lam in grid:
        g = build_graph(coefficients, labels, lam)
        d = edit_distance(reference, g)
        if best_d is None or d < best_d:
            best, best_d = g, d
    return best, best_d


def pairwise_first_order(entities: Mapping[str, np.ndarray], family=Family.IDENTITY,
                         config: Optional[SelectionConfig] = None):
    """Symmetric matrix of first-order coefficients between every pair of entities.

    Each entity is an N x d block of observations (rows aligned across
    entities).  For the MT families the parameters are selected per pair
    with the ``(i, j)`` ordering of the labels; the diagonal is 1.
    """
    labels = tuple(entities)
    family = Family(family)
    k = len(labels)
    c = np.eye(k)
    for i, j in combinations(range(k), 2):
        sample = PairedSample(entities[labels[i]], entities[labels[j]])
        if family is Family.IDENTITY:
            spec = MtFunctionSpec.identity()
        else:
            spec = select_parameters(sample, family, config).spec
        c[i, j] = c[j, i] = mtcca(sample, spec).rho[0]
    return c, labels
