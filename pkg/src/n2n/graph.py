"""Immutable undirected graphs in CSR form, plus feature/label/split loaders."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .tensor import DimensionError

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """An input file does not follow the expected layout."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph; each edge is stored in both endpoint rows.

    ``original_ids[k]`` is the id node ``k`` carried in the source file.
    """

    offsets: np.ndarray
    neighbors: np.ndarray
    original_ids: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        neighbors = np.ascontiguousarray(self.neighbors, dtype=np.int64)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "neighbors", neighbors)
        if self.original_ids is not None:
            ids = np.asarray(self.original_ids, dtype=np.int64)
            object.__setattr__(self, "original_ids", ids)
        if offsets.ndim != 1 or offsets.size < 2 or offsets[0] != 0:
            raise GraphFormatError("offsets must start at 0 and describe at least one node")
        if np.any(np.diff(offsets) < 0) or offsets[-1] != neighbors.size:
            raise GraphFormatError("offsets must be nondecreasing and end at len(neighbors)")
        if neighbors.size % 2:
            raise GraphFormatError("an undirected CSR graph stores an even number of entries")
        for arr in (offsets, neighbors):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, src, dst, num_nodes: Optional[int] = None,
                   original_ids=None) -> "Graph":
        """Symmetrise, drop self-loops and duplicates, and pack into CSR."""
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise DimensionError("src and dst must have the same length")
        if num_nodes is None:
            num_nodes = int(max(src.max(initial=-1), dst.max(initial=-1))) + 1
        if num_nodes <= 0:
            raise GraphFormatError("graph has no nodes")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_nodes):
            raise GraphFormatError("edge endpoint outside 0..num_nodes-1")
        keep = src != dst
        s = np.concatenate([src[keep], dst[keep]])
        d = np.concatenate([dst[keep], src[keep]])
        key = np.unique(s * num_nodes + d)
        rows, cols = key // num_nodes, key % num_nodes
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
        return cls(offsets, cols, original_ids)

    @classmethod
    def from_adjacency(cls, adjacency) -> "Graph":
        a = sp.coo_matrix(adjacency)
        if a.shape[0] != a.shape[1]:
            raise DimensionError("adjacency must be square")
        mask = a.data != 0
        return cls.from_edges(a.row[mask], a.col[mask], num_nodes=a.shape[0])

    @property
    def num_nodes(self) -> int:
        return self.offsets.size - 1

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return self.neighbors.size // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def degree(self, i: int) -> int:
        return int(self.offsets[i + 1] - self.offsets[i])

    def neighbors_of(self, i: int) -> np.ndarray:
        return self.neighbors[self.offsets[i]:self.offsets[i + 1]]

    @property
    def isolated(self) -> np.ndarray:
        return self.degrees == 0

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Both orientations of every edge, in CSR order."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees)
        return src, self.neighbors.copy()

    def edges(self) -> np.ndarray:
        """Each undirected edge once as an ``(E, 2)`` array with ``i < j``."""
        src, dst = self.directed_edges()
        keep = src < dst
        return np.stack([src[keep], dst[keep]], axis=1)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.neighbors.size, dtype=np.float64)
        return sp.csr_matrix((data, self.neighbors, self.offsets),
                             shape=(self.num_nodes, self.num_nodes))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.neighbors, other.neighbors))

    __hash__ = None

    def __repr__(self) -> str:
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"

    def validate(self) -> None:
        """Check symmetry, sortedness, and absence of self-loops (O(E log E))."""
        src, dst = self.directed_edges()
        if np.any(src == dst):
            raise GraphFormatError("graph contains a self-loop")
        if self.neighbors.size:
            same_row = src[1:] == src[:-1]
            if np.any(same_row & (dst[1:] <= dst[:-1])):
                raise GraphFormatError("neighbor lists must be strictly increasing")
        n = self.num_nodes
        if not np.array_equal(np.sort(src * n + dst), np.sort(dst * n + src)):
            raise GraphFormatError("adjacency is not symmetric")


# ---------------------------------------------------------------------------
# edge lists


def load_edge_list(path, directed_input: bool = False) -> Graph:
    """Read ``src dst`` pairs (whitespace separated, ``#`` comments).

    Ids are compacted to ``0..N-1`` in first-appearance order; the mapping
    is kept on ``Graph.original_ids``. Self-loop lines register the node but
    add no edge. Directed input is symmetrised either way; the flag only
    controls whether one-way pairs are reported.
    """
    index: dict[int, int] = {}
    src, dst = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected 'src dst', got {line!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: node ids must be integers, got {line!r}") from None
            src.append(index.setdefault(a, len(index)))
            dst.append(index.setdefault(b, len(index)))
    if not index:
        raise GraphFormatError(f"{path}: empty graph")
    s, d = np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)
    if directed_input:
        n = len(index)
        fwd = set((s * n + d).tolist())
        one_way = sum(1 for a, b in zip(s.tolist(), d.tolist()) if a != b and b * n + a not in fwd)
        if one_way:
            logger.info("%s: symmetrised %d one-way edges", path, one_way)
    original = np.fromiter(index.keys(), dtype=np.int64, count=len(index))
    g = Graph.from_edges(s, d, num_nodes=len(index), original_ids=original)
    if g.isolated.any():
        logger.warning("%s: %d isolated nodes", path, int(g.isolated.sum()))
    return g


def write_edge_list(graph: Graph, path) -> Path:
    """Write ``graph`` so that :func:`load_edge_list` rebuilds it exactly.

    Node ``k``'s first line is ``k j`` with ``j < k``, or the marker ``k k``
    when it has no smaller neighbour, so first-appearance order equals id
    order and isolated nodes survive.
    """
    path = Path(path)
    lines = ["# undirected edge list, one edge per line"]
    for k in range(graph.num_nodes):
        nbrs = graph.neighbors_of(k)
        lower = nbrs[nbrs < k]
        if lower.size == 0:
            lines.append(f"{k} {k}")
        lines.extend(f"{k} {j}" for j in lower.tolist())
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_id_map(graph: Graph, path) -> Path:
    """Sidecar CSV ``node,original_id``."""
    path = Path(path)
    ids = graph.original_ids if graph.original_ids is not None else np.arange(graph.num_nodes)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "original_id"])
        w.writerows(zip(range(graph.num_nodes), ids.tolist()))
    return path


# ---------------------------------------------------------------------------
# features, labels, splits


def load_features(path, graph: Optional[Graph] = None) -> np.ndarray:
    """Headerless numeric CSV, one row per node in id order."""
    x = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{path}: features contain non-finite values")
    if graph is not None and x.shape[0] != graph.num_nodes:
        raise DimensionError(f"{path}: {x.shape[0]} feature rows for {graph.num_nodes} nodes")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        warnings.warn(f"{path}: feature values fall outside [0, 1]", stacklevel=2)
    return x


def adjacency_as_features(graph: Graph) -> sp.csr_matrix:
    """N x N binary feature matrix whose row i marks the neighbours of i."""
    return graph.adjacency()


def load_labels(path, graph: Optional[Graph] = None) -> np.ndarray:
    y = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=1).ravel()
    if y.size == 0 or not np.all(np.isfinite(y)) or np.any(y != np.round(y)) or y.min() < 0:
        raise ValueError(f"{path}: labels must be non-negative integers")
    if graph is not None and y.size != graph.num_nodes:
        raise DimensionError(f"{path}: {y.size} labels for {graph.num_nodes} nodes")
    return y.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        parts = {}
        for name in ("train", "val", "test"):
            arr = np.asarray(getattr(self, name), dtype=np.int64).ravel()
            if arr.size == 0:
                raise ValueError(f"split part {name!r} is empty")
            if np.unique(arr).size != arr.size:
                raise ValueError(f"split part {name!r} lists a node twice")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            parts[name] = arr
        joined = np.concatenate(list(parts.values()))
        if np.unique(joined).size != joined.size:
            raise ValueError("train/val/test must be pairwise disjoint")
        if joined.min() < 0:
            raise ValueError("negative node id in split")

    def __eq__(self, other):
        if not isinstance(other, Split):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("train", "val", "test"))

    __hash__ = None

    def check_nodes(self, num_nodes: int) -> None:
        if max(self.train.max(), self.val.max(), self.test.max()) >= num_nodes:
            raise ValueError(f"split references a node id >= {num_nodes}")


def make_split(labels, scheme: str = "stratified", seed: int = 0, train_frac: float = 0.6,
               val_frac: float = 0.2, path=None) -> Split:
    """Build a train/val/test split.

    ``scheme="stratified"`` samples each class separately with the given
    fractions (rounded half up; the rest goes to test). ``scheme="file"``
    reads ``path`` in the ``train: ...`` / ``val: ...`` / ``test: ...``
    layout.
    """
    y = np.asarray(labels, dtype=np.int64).ravel()
    if scheme == "file":
        if path is None:
            raise ValueError("file split scheme needs a path")
        split = load_split(path)
        split.check_nodes(y.size)
        return split
    if scheme != "stratified":
        raise ValueError(f"unknown split scheme {scheme!r}")
    if not (0 < train_frac < 1 and 0 < val_frac < 1 and train_frac + val_frac < 1):
        raise ValueError("fractions must be positive and sum to less than 1")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        n_train = int(np.floor(train_frac * members.size + 0.5))
        n_val = int(np.floor(val_frac * members.size + 0.5))
        if n_train < 1 or n_val < 1 or members.size - n_train - n_val < 1:
            raise ValueError(f"class {c} has {members.size} nodes, too few for a train/val/test split")
        perm = rng.permutation(members)
        parts[0].append(perm[:n_train])
        parts[1].append(perm[n_train:n_train + n_val])
        parts[2].append(perm[n_train + n_val:])
    return Split(*(np.sort(np.concatenate(p)) for p in parts))


def load_split(path) -> Split:
    found: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, rest = line.partition(":")
            key = key.strip()
            if not sep or key not in ("train", "val", "test") or key in found:
                raise GraphFormatError(f"{path}:{lineno}: expected one 'train:', 'val:' or 'test:' line")
            try:
                found[key] = np.array([int(t) for t in rest.split()], dtype=np.int64)
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: node ids must be integers") from None
    missing = {"train", "val", "test"} - found.keys()
    if missing:
        raise GraphFormatError(f"{path}: missing {sorted(missing)}")
    return Split(found["train"], found["val"], found["test"])


def write_split(split: Split, path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k}: {' '.join(map(str, getattr(split, k).tolist()))}\n"
                            for k in ("train", "val", "test")), encoding="utf-8")
    return path


def laplacian(graph: Graph) -> sp.csr_matrix:
    """Combinatorial Laplacian ``D - A``."""
    a = graph.adjacency()
    return (sp.diags(graph.degrees.astype(np.float64)) - a).tocsr()
