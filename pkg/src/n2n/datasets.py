"""Dataset discovery and loading.

Three on-disk layouts are understood, looked up under ``$N2N_DATA/<name>``
(or ``~/.n2n_data/<name>``):

* planetoid raw text: ``<name>.content`` (id, binary words..., label) and
  ``<name>.cites`` (cited citing);
* compressed arrays: ``<name>.npz`` with ``adj_*`` / ``attr_*`` CSR parts
  and ``labels``;
* plain files: ``edges.txt``, optional ``features.csv``, ``labels.csv``.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .graph import Graph, GraphFormatError, Split, adjacency_as_features, load_edge_list, \
    load_features, load_labels

logger = logging.getLogger(__name__)

FeatureLike = Union[np.ndarray, sp.csr_matrix]


class DatasetNotFound(FileNotFoundError):
    pass


@dataclass
class Dataset:
    name: str
    graph: Graph
    features: FeatureLike
    labels: Optional[np.ndarray] = None
    split: Optional[Split] = None
    sources: tuple = ()

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1


def data_root() -> Path:
    return Path(os.environ.get("N2N_DATA", Path.home() / ".n2n_data"))


def _label_codes(raw) -> np.ndarray:
    # class names sorted so codes do not depend on file order
    _, codes = np.unique(np.asarray(raw), return_inverse=True)
    return codes.astype(np.int64)


def load_planetoid_raw(directory, name: str) -> Dataset:
    """Read the ``.content`` / ``.cites`` pair; nodes keep ``.content`` order."""
    directory = Path(directory)
    ids, rows, raw_labels = [], [], []
    with open(directory / f"{name}.content", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise GraphFormatError(f"{name}.content:{lineno}: too few columns")
            ids.append(parts[0])
            rows.append(np.array(parts[1:-1], dtype=np.float64))
            raw_labels.append(parts[-1])
    index = {k: i for i, k in enumerate(ids)}
    src, dst, dropped = [], [], 0
    with open(directory / f"{name}.cites", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2:
                continue
            if parts[0] in index and parts[1] in index:
                src.append(index[parts[1]])
                dst.append(index[parts[0]])
            else:
                dropped += 1
    if dropped:
        logger.info("%s: dropped %d citations to unknown papers", name, dropped)
    original = np.array([int(k) if k.lstrip("-").isdigit() else i for i, k in enumerate(ids)])
    g = Graph.from_edges(src, dst, num_nodes=len(ids), original_ids=original)
    return Dataset(name, g, np.vstack(rows), _label_codes(raw_labels),
                   sources=(directory / f"{name}.content", directory / f"{name}.cites"))


def load_npz(path, name: Optional[str] = None) -> Dataset:
    path = Path(path)
    with np.load(path, allow_pickle=False) as z:
        def csr(prefix):
            return sp.csr_matrix((z[f"{prefix}_data"], z[f"{prefix}_indices"], z[f"{prefix}_indptr"]),
                                 shape=tuple(z[f"{prefix}_shape"]))

        g = Graph.from_adjacency(csr("adj"))
        feats = csr("attr") if "attr_data" in z else adjacency_as_features(g)
        labels = _label_codes(z["labels"]) if "labels" in z else None
    if sp.issparse(feats) and feats.nnz > 0.1 * feats.shape[0] * feats.shape[1]:
        feats = feats.toarray()
    return Dataset(name or path.stem, g, feats, labels, sources=(path,))


def load_plain(directory, name: Optional[str] = None) -> Dataset:
    """``edges.txt`` plus optional ``features.csv`` and ``labels.csv`` (rows in original id order)."""
    directory = Path(directory)
    g = load_edge_list(directory / "edges.txt")
    order = np.argsort(g.original_ids)
    if not np.array_equal(g.original_ids[order], np.arange(g.num_nodes)):
        raise GraphFormatError(f"{directory}: plain layout needs node ids 0..N-1 in edges.txt")
    # rows of the CSV files follow original ids; reindex into compacted order
    feats_path, labels_path = directory / "features.csv", directory / "labels.csv"
    feats = load_features(feats_path)[g.original_ids] if feats_path.exists() \
        else adjacency_as_features(g)
    labels = load_labels(labels_path)[g.original_ids] if labels_path.exists() else None
    for arr in (feats, labels):
        if arr is not None and arr.shape[0] != g.num_nodes:
            raise GraphFormatError(f"{directory}: row count does not match the graph")
    sources = tuple(p for p in (directory / "edges.txt", feats_path, labels_path) if p.exists())
    return Dataset(name or directory.name, g, feats, labels, sources=sources)


def load_dataset(name: str, root=None) -> Dataset:
    base = Path(root) if root is not None else data_root()
    d = base / name
    candidates = [
        (d / f"{name}.content", lambda: load_planetoid_raw(d, name)),
        (base / f"{name}.npz", lambda: load_npz(base / f"{name}.npz", name)),
        (d / f"{name}.npz", lambda: load_npz(d / f"{name}.npz", name)),
        (d / "edges.txt", lambda: load_plain(d, name)),
    ]
    for marker, loader in candidates:
        if marker.exists():
            return loader()
    raise DatasetNotFound(f"dataset {name!r} not found under {base} "
                          f"(set N2N_DATA to the directory holding it)")


def make_citation_like(num_nodes: int = 600, num_classes: int = 4, num_words: int = 300,
                       p_in: float = 0.02, p_out: float = 0.002, words_per_node: int = 12,
                       topic_share: float = 0.7, seed: int = 0) -> Dataset:
    """Stochastic block graph with class-dependent sparse binary word features.

    A small stand-in for citation benchmarks: homophilous edges and
    bag-of-words rows whose words come mostly from a class vocabulary.
    """
    rng = np.random.default_rng(seed)
    y = np.sort(rng.integers(0, num_classes, size=num_nodes))
    same = y[:, None] == y[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random((num_nodes, num_nodes)) < prob, k=1)
    src, dst = np.nonzero(upper)
    g = Graph.from_edges(src, dst, num_nodes=num_nodes)
    vocab = np.array_split(rng.permutation(num_words), num_classes)
    x = np.zeros((num_nodes, num_words))
    for i in range(num_nodes):
        own = rng.random(words_per_node) < topic_share
        words = np.where(own, rng.choice(vocab[y[i]], words_per_node),
                         rng.integers(0, num_words, words_per_node))
        x[i, words] = 1.0
    return Dataset("citation-like", g, x, y.astype(np.int64))
