"""Training losses and graph smoothness measures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .graph import Graph
from .tensor import DimensionError, Tensor


@dataclass
class LossValue:
    """A 1x1 loss tensor plus the named float values it was built from."""

    tensor: Tensor
    components: dict[str, float] = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.tensor.item()

    def __float__(self) -> float:
        return self.value


def infonce(h: Tensor, a: Tensor, tau: float) -> LossValue:
    """Node-to-neighbourhood InfoNCE with cosine similarity.

    Row ``i`` of ``a`` is the positive for row ``i`` of ``h``; every row of
    ``h`` (including ``i`` itself) enters the denominator.
    """
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    T._same_shape(h, a, "infonce")
    hn, an = T.row_normalize(h), T.row_normalize(a)
    pos = T.scale(T.row_sum(T.mul(an, hn)), 1.0 / tau)
    lse = T.logsumexp_rows(T.scale(hn @ hn.T, 1.0 / tau))
    loss = T.mean(T.sub(lse, pos))
    return LossValue(loss, {"infonce": loss.item()})


def pair_infonce(h_anchor: Tensor, h_view: Tensor, tau: float) -> LossValue:
    """In-batch contrastive loss: view ``i`` is the positive for anchor ``i``, other views are negatives."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    T._same_shape(h_anchor, h_view, "pair_infonce")
    logits = T.scale(T.row_normalize(h_anchor) @ T.row_normalize(h_view).T, 1.0 / tau)
    loss = T.softmax_cross_entropy(logits, np.arange(h_anchor.shape[0]))
    return LossValue(loss, {"infonce": loss.item()})


def cross_entropy(logits: Tensor, labels, rows=None) -> LossValue:
    loss = T.softmax_cross_entropy(logits, labels, rows)
    return LossValue(loss, {"ce": loss.item()})


def mse_pairs(h_anchor: Tensor, h_view: Tensor) -> LossValue:
    """Mean squared distance between l2-normalised anchor and view rows."""
    T._same_shape(h_anchor, h_view, "mse_pairs")
    diff = T.sub(T.row_normalize(h_anchor), T.row_normalize(h_view))
    loss = T.mean(T.row_sum(T.square(diff)))
    return LossValue(loss, {"mse": loss.item()})


def _decorrelation_terms(c: Tensor, beta: float) -> Tensor:
    """``sum_i (1 - C_ii)^2 + beta * sum_{i != j} C_ij^2``."""
    d = c.shape[0]
    invariance = T.sum_all(T.square(T.shift(-T.diag(c), 1.0)))
    off = T.mul(T.square(c), c.tape.constant(1.0 - np.eye(d)))
    return T.add(invariance, T.scale(T.sum_all(off), beta))


def auto_reg(h: Tensor, beta: float, eps: float = 1e-5) -> LossValue:
    """Decorrelation penalty on the cosine-normalised auto-correlation of centred columns.

    Column norms are guarded as ``sqrt(||s||^2 + eps^2)``.
    """
    if h.shape[0] < 2:
        raise DimensionError("auto_reg needs at least two rows")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    hc = T.center_columns(h)
    gram = hc.T @ hc
    norms = T.sqrt(T.shift(T.diag(gram), eps * eps))
    c = T.div(gram, norms.T @ norms)
    loss = _decorrelation_terms(c, beta)
    return LossValue(loss, {"auto_reg": loss.item()})


def cross_reg(h_anchor: Tensor, h_view: Tensor, beta: float, eps: float = 1e-5) -> LossValue:
    """Decorrelation penalty on ``(1/N) Ha^T Hv + eps I`` with centred columns."""
    T._same_shape(h_anchor, h_view, "cross_reg")
    n = h_anchor.shape[0]
    if n < 2:
        raise DimensionError("cross_reg needs at least two rows")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    c = T.add_diag(T.scale(T.center_columns(h_anchor).T @ T.center_columns(h_view), 1.0 / n), eps)
    loss = _decorrelation_terms(c, beta)
    return LossValue(loss, {"cross_reg": loss.item()})


def jl_combine(ce: LossValue, nce: LossValue, alpha: float) -> LossValue:
    """``(1 - alpha) * ce + alpha * nce``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    loss = T.add(T.scale(ce.tensor, 1.0 - alpha), T.scale(nce.tensor, alpha))
    return LossValue(loss, {**ce.components, **nce.components, "total": loss.item()})


def combine(*parts: LossValue) -> LossValue:
    """Unit-weight sum of several losses."""
    total = parts[0].tensor
    comps = dict(parts[0].components)
    for p in parts[1:]:
        total = T.add(total, p.tensor)
        comps.update(p.components)
    comps["total"] = total.item()
    return LossValue(total, comps)


# ---------------------------------------------------------------------------
# smoothness (plain numpy, not differentiated)


def _signals(s, g: Graph) -> np.ndarray:
    arr = np.asarray(s.numpy() if isinstance(s, Tensor) else s, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != g.num_nodes:
        raise DimensionError(f"{arr.shape[0]} signal rows for {g.num_nodes} nodes")
    return arr


def _apply_laplacian(g: Graph, s: np.ndarray) -> np.ndarray:
    """``L s`` as per-node sums of ``s_i - s_j``, so constant signals map to exact zeros."""
    src, dst = g.directed_edges()
    rows = sp.csr_matrix((np.ones(src.size), np.arange(src.size), g.offsets),
                         shape=(g.num_nodes, src.size))
    return rows @ (s[src] - s[dst])


def gtv(signals, g: Graph) -> float:
    """Graph total variation ``sum_d s_d^T L s_d``."""
    s = _signals(signals, g)
    return float(np.sum(s * _apply_laplacian(g, s)))


def gtv_edges(signals, g: Graph) -> float:
    """Same quantity as :func:`gtv`, summed edge by edge (each undirected edge once)."""
    s = _signals(signals, g)
    e = g.edges()
    return float(np.sum((s[e[:, 0]] - s[e[:, 1]]) ** 2))


def feature_smoothness(h, g: Graph) -> float:
    """``|| sum_i (sum_{j in N_i} (h_i - h_j))^2 ||_1 / (|E| D)`` with |E| undirected."""
    s = _signals(h, g)
    if g.num_edges == 0:
        raise ValueError("feature smoothness needs at least one edge")
    per_node = _apply_laplacian(g, s)
    return float(np.abs((per_node ** 2).sum(axis=0)).sum() / (g.num_edges * s.shape[1]))
