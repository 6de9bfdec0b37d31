"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .graph import Graph, Split
from .tensor import DimensionError


def check_graph(graph) -> Graph:
    if not isinstance(graph, Graph):
        raise TypeError(f"expected a Graph, got {type(graph).__name__}")
    return graph


def check_features(X, graph: Graph | None = None):
    """Float64 dense or CSR matrix with finite entries (and one row per node)."""
    if sp.issparse(X):
        X = sp.csr_matrix(X, dtype=np.float64)
        data = X.data
    else:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionError(f"features must be 2-D, got ndim {X.ndim}")
        data = X
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise DimensionError(f"features must be nonempty, got shape {X.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError("features contain non-finite values")
    if graph is not None and X.shape[0] != graph.num_nodes:
        raise DimensionError(f"{X.shape[0]} feature rows for {graph.num_nodes} nodes")
    return X


def check_labels(y, n: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise DimensionError("labels must be 1-D")
    if y.size == 0 or not np.issubdtype(y.dtype, np.integer) and not np.all(y == np.round(y)):
        raise ValueError("labels must be integers")
    y = y.astype(np.int64)
    if y.min() < 0:
        raise ValueError("labels must be non-negative")
    if n is not None and y.size != n:
        raise DimensionError(f"{y.size} labels for {n} nodes")
    return y


def check_split(split, n: int) -> Split:
    if not isinstance(split, Split):
        raise TypeError(f"expected a Split, got {type(split).__name__}")
    split.check_nodes(n)
    return split
