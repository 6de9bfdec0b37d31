"""Topology-aware positive sampling.

Each node ``i`` is described by the indicator of its neighbourhood ``N_i``
(``i`` itself excluded) over the node set. The dependency of an edge is
the mutual information, in nats, of the two indicators under a uniformly
drawn node; cells with zero mass contribute nothing.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .graph import Graph

logger = logging.getLogger(__name__)


def _mi_from_counts(n, a, b, c) -> np.ndarray:
    """Mutual information of two set indicators from ``|V|``, ``|A|``, ``|B|``, ``|A & B|``.

    The arguments are put in a canonical order (smaller set first) so the
    result is bitwise symmetric in the two sets.
    """
    n, a, b, c = (np.asarray(v, dtype=np.float64) for v in (n, a, b, c))
    a, b = np.minimum(a, b), np.maximum(a, b)
    cells = ((c, a, b), (a - c, a, n - b), (b - c, n - a, b), (n - a - b + c, n - a, n - b))
    total = np.zeros(np.broadcast(n, a, b, c).shape)
    for joint, mx, my in cells:
        with np.errstate(divide="ignore", invalid="ignore"):
            term = joint / n * np.log(joint * n / (mx * my))
        total = total + np.where(joint > 0, term, 0.0)
    return total


def dependency(g: Graph, i: int, j: int) -> float:
    """Structural dependency between neighbours ``i`` and ``j``."""
    ni, nj = g.neighbors_of(i), g.neighbors_of(j)
    if not (0 <= j < g.num_nodes) or ni.size == 0 or ni[np.searchsorted(ni, j) % ni.size] != j:
        raise ValueError(f"node {j} is not a neighbour of node {i}")
    common = np.intersect1d(ni, nj, assume_unique=True).size
    return float(_mi_from_counts(g.num_nodes, ni.size, nj.size, common))


def edge_dependencies(g: Graph) -> np.ndarray:
    """Dependency for every stored (directed) CSR entry, aligned with ``g.neighbors``."""
    if g.neighbors.size == 0:
        return np.zeros(0)
    a = g.adjacency()
    common = (a @ a).multiply(a).tocsr()
    common.sort_indices()
    # (A @ A) masked by A keeps exactly the CSR pattern of A, minus zero counts
    counts = np.asarray(common[np.repeat(np.arange(g.num_nodes), g.degrees), g.neighbors]).ravel()
    src, dst = g.directed_edges()
    deg = g.degrees
    return _mi_from_counts(g.num_nodes, deg[src], deg[dst], counts)


@dataclass(frozen=True, eq=False)
class PositiveTable:
    """Ranked positives per node in CSR layout (``offsets`` has length N+1)."""

    offsets: np.ndarray
    neighbors: np.ndarray
    scores: np.ndarray
    k: int
    skipped: int = 0

    @property
    def num_nodes(self) -> int:
        return self.offsets.size - 1

    @property
    def empty(self) -> np.ndarray:
        """Mask of nodes without positives."""
        return np.diff(self.offsets) == 0

    def positives(self, i: int) -> np.ndarray:
        return self.neighbors[self.offsets[i]:self.offsets[i + 1]]

    def edges(self) -> np.ndarray:
        """``(M, 2)`` array of ``(node, positive)`` pairs."""
        src = np.repeat(np.arange(self.num_nodes), np.diff(self.offsets))
        return np.stack([src, self.neighbors], axis=1)

    def aggregation_matrix(self) -> sp.csr_matrix:
        """Row-stochastic operator so that ``M @ H`` is the mean over positives."""
        counts = np.diff(self.offsets)
        weights = np.repeat(1.0 / np.maximum(counts, 1), counts)
        return sp.csr_matrix((weights, self.neighbors, self.offsets),
                             shape=(self.num_nodes, self.num_nodes))

    def __eq__(self, other):
        if not isinstance(other, PositiveTable):
            return NotImplemented
        return (self.k == other.k and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.neighbors, other.neighbors)
                and np.array_equal(self.scores, other.scores))

    __hash__ = None

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "rank", "neighbor", "score"])
            for i in range(self.num_nodes):
                lo, hi = self.offsets[i], self.offsets[i + 1]
                for r in range(lo, hi):
                    w.writerow([i, r - lo, int(self.neighbors[r]), repr(float(self.scores[r]))])
        return path

    @classmethod
    def from_csv(cls, path, num_nodes: int, k: Optional[int] = None) -> "PositiveTable":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if rows.size == 0:
            rows = rows.reshape(0, 4)
        node = rows[:, 0].astype(np.int64)
        if np.any(np.diff(node) < 0) or (node.size and node.max() >= num_nodes):
            raise ValueError(f"{path}: rows must be grouped by ascending node id < {num_nodes}")
        counts = np.bincount(node, minlength=num_nodes)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        kk = int(counts.max(initial=0)) if k is None else k
        return cls(offsets, rows[:, 2].astype(np.int64), rows[:, 3].copy(), kk,
                   int(np.sum(counts == 0)))


def _table_from_order(g: Graph, order: np.ndarray, scores: np.ndarray, k: int) -> PositiveTable:
    deg = g.degrees
    take = deg if k == 0 else np.minimum(deg, k)
    offsets = np.zeros(g.num_nodes + 1, dtype=np.int64)
    np.cumsum(take, out=offsets[1:])
    # rank of each sorted entry within its node's block
    rank = np.arange(order.size) - np.repeat(g.offsets[:-1], deg)
    keep = rank < np.repeat(take, deg)
    chosen = order[keep]
    skipped = int(np.sum(deg == 0))
    if skipped:
        logger.info("positive table: %d isolated nodes have no positives", skipped)
    return PositiveTable(offsets, g.neighbors[chosen].copy(), scores[chosen].copy(), k, skipped)


def build_positive_table(g: Graph, k: int) -> PositiveTable:
    """Top-``min(k, degree)`` neighbours by dependency; ``k=0`` keeps all of them.

    Ties are broken by ascending neighbour id.
    """
    if k < 0:
        raise ValueError(f"sampling size must be >= 0, got {k}")
    scores = edge_dependencies(g)
    src, dst = g.directed_edges()
    order = np.lexsort((dst, -scores, src))
    return _table_from_order(g, order, scores, k)


def random_positive_table(g: Graph, k: int, rng: np.random.Generator) -> PositiveTable:
    """Uniformly sampled ``min(k, degree)`` neighbours; the ablation baseline."""
    if k < 1:
        raise ValueError(f"sampling size must be >= 1, got {k}")
    src, dst = g.directed_edges()
    order = np.lexsort((rng.random(src.size), src))
    return _table_from_order(g, order, np.zeros(src.size), k)


def full_neighborhood_table(g: Graph) -> PositiveTable:
    src, _ = g.directed_edges()
    return _table_from_order(g, np.arange(src.size), np.zeros(src.size), 0)


@dataclass(frozen=True, eq=False)
class Partition:
    labels: np.ndarray
    n_components: int

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_components)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def size_histogram(self) -> dict[int, int]:
        """Component size -> number of components of that size."""
        values, counts = np.unique(self.sizes, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def label_purity(self, labels) -> np.ndarray:
        """Share of each component's nodes carrying its most common label."""
        y = np.asarray(labels, dtype=np.int64)
        joint = sp.coo_matrix((np.ones(y.size), (self.labels, y)),
                              shape=(self.n_components, y.max() + 1)).tocsr()
        return joint.max(axis=1).toarray().ravel() / self.sizes

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "component"])
            w.writerows(enumerate(self.labels.tolist()))
        return path


def taps_partition(g: Graph, table: Optional[PositiveTable] = None) -> Partition:
    """Components of the graph formed by each node's top-1 parent edge."""
    if table is None or table.k != 1:
        table = build_positive_table(g, 1)
    e = table.edges()
    parent = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])),
                           shape=(g.num_nodes, g.num_nodes))
    n, labels = connected_components(parent, directed=False)
    return Partition(labels.astype(np.int64), int(n))


def label_smoothness(edges, labels) -> float:
    """Fraction of edges whose endpoints carry different labels."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.shape[0] == 0:
        raise ValueError("label smoothness needs at least one edge")
    y = np.asarray(labels)
    return float(np.mean(y[e[:, 0]] != y[e[:, 1]]))
