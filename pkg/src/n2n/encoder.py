"""MLP encoder with optional per-layer ZCA whitening, and neighbourhood aggregation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .taps import PositiveTable
from .tensor import DimensionError, Tape, Tensor

WHITEN_LAYERS = ("all", "hidden", "last", "none")
NORMS = ("zca", "newton", "bn")


@dataclass(frozen=True)
class WhitenConfig:
    iterations: int = 5
    eps: float = 1e-5

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ValueError(f"whitening needs at least one iteration, got {self.iterations}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


@dataclass
class EncoderParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("need one bias per weight matrix and at least one layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (1, w.shape[1]):
                raise DimensionError(f"layer {l}: bias shape {b.shape} for weight {w.shape}")
            if l and self.weights[l - 1].shape[1] != w.shape[0]:
                raise DimensionError(f"layer {l}: input dim {w.shape[0]} != previous output "
                                     f"{self.weights[l - 1].shape[1]}")

    @classmethod
    def init(cls, dims: Sequence[int], rng: np.random.Generator) -> "EncoderParams":
        """Glorot-uniform weights, zero biases; ``dims`` = (input, hidden..., output)."""
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"invalid layer dims {dims}")
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            bs.append(np.zeros((1, fan_out)))
        return cls(ws, bs)

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def flat(self) -> list[np.ndarray]:
        """Parameters in optimiser order (w0, b0, w1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "EncoderParams":
        return EncoderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def on_tape(self, tape: Tape, trainable: bool = True) -> list[tuple[Tensor, Tensor]]:
        make = tape.variable if trainable else tape.constant
        return [(make(w), make(b)) for w, b in zip(self.weights, self.biases)]

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            T.save_matrix(directory / f"w{l}.csv", w)
            T.save_matrix(directory / f"b{l}.csv", b)
            files.append({"weight": f"w{l}.csv", "bias": f"b{l}.csv"})
        manifest = directory / "manifest.json"
        manifest.write_text(json.dumps({"dims": self.dims, "layers": files}, indent=2) + "\n",
                            encoding="utf-8")
        return manifest

    @classmethod
    def load(cls, directory) -> "EncoderParams":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        ws = [T.load_matrix(directory / e["weight"]) for e in manifest["layers"]]
        bs = [T.load_matrix(directory / e["bias"]) for e in manifest["layers"]]
        return cls(ws, bs)


def schur_newton_whiten(h: Tensor, cfg: WhitenConfig = WhitenConfig(),
                        history: Optional[list] = None) -> Tensor:
    """ZCA whitening with the inverse square root from coupled Schur-Newton steps.

    ``history`` (if given) receives ``||N_p - I||_F`` for p = 0..P.
    """
    n, d = h.shape
    if n < 2:
        raise DimensionError("whitening needs at least two rows")
    hc = T.center_columns(h)
    cov = T.add_diag(T.scale(hc.T @ hc, 1.0 / n), cfg.eps)
    tr = T.trace(cov)
    nm = T.div_scalar(cov, tr)
    p = hc.tape.constant(np.eye(d))
    eye = np.eye(d)
    if history is not None:
        history.append(float(np.linalg.norm(nm.value - eye)))
    for it in range(1, cfg.iterations + 1):
        try:
            m = T.scale(T.add_diag(-nm, 3.0), 0.5)
            p = p @ m
            nm = m @ (m @ nm)
        except FloatingPointError as exc:
            raise FloatingPointError(f"whitening iteration {it}: {exc}") from None
        if history is not None:
            history.append(float(np.linalg.norm(nm.value - eye)))
    return T.div_scalar(hc @ p, T.sqrt(tr))


def newton_whiten(h: Tensor, cfg: WhitenConfig = WhitenConfig(),
                  history: Optional[list] = None) -> Tensor:
    """Plain Newton iteration ``P <- (3P - P^3 N0) / 2``; kept for comparison only."""
    n, d = h.shape
    if n < 2:
        raise DimensionError("whitening needs at least two rows")
    hc = T.center_columns(h)
    cov = T.add_diag(T.scale(hc.T @ hc, 1.0 / n), cfg.eps)
    tr = T.trace(cov)
    n0 = T.div_scalar(cov, tr)
    p = hc.tape.constant(np.eye(d))
    for it in range(1, cfg.iterations + 1):
        try:
            p = T.scale(T.scale(p, 3.0) - p @ (p @ (p @ n0)), 0.5)
        except FloatingPointError as exc:
            raise FloatingPointError(f"whitening iteration {it}: {exc}") from None
        if history is not None:
            history.append(float(np.linalg.norm(p.value @ p.value @ n0.value - np.eye(d))))
    return T.div_scalar(hc @ p, T.sqrt(tr))


def batch_norm(h: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-column standardisation with batch statistics (no affine part)."""
    n, _ = h.shape
    tape = h.tape
    hc = T.center_columns(h)
    var = T.shift(tape.constant(np.full((1, n), 1.0 / n)) @ T.square(hc), eps)
    spread = tape.constant(np.ones((n, 1))) @ T.sqrt(var)
    return T.div(hc, spread)


def _normalize(h: Tensor, norm: str, cfg: WhitenConfig) -> Tensor:
    if norm == "zca":
        return schur_newton_whiten(h, cfg)
    if norm == "newton":
        return newton_whiten(h, cfg)
    if norm == "bn":
        return batch_norm(h, cfg.eps)
    raise ValueError(f"unknown normalisation {norm!r}; choose from {NORMS}")


def mlp_forward(x, params, tape: Tape, whiten: Optional[WhitenConfig] = None,
                training: bool = False, dropout: float = 0.0,
                rng: Optional[np.random.Generator] = None, whiten_layers: str = "all",
                norm: str = "zca", activate_last: bool = True) -> Tensor:
    """Encode ``x`` (dense, sparse or a Tensor) into ``N x D_L`` embeddings.

    Each layer is affine -> ReLU -> dropout -> normalisation. Dropout is
    skipped on the last layer, and so is the ReLU when ``activate_last`` is
    false (used when the output is a logit head). ``params`` is either an
    :class:`EncoderParams` (taken as constants) or the ``(W, b)`` tensors
    returned by :meth:`EncoderParams.on_tape`.
    """
    if whiten_layers not in WHITEN_LAYERS:
        raise ValueError(f"whiten_layers must be one of {WHITEN_LAYERS}")
    layers = params.on_tape(tape, trainable=False) if isinstance(params, EncoderParams) else params
    h = x if isinstance(x, Tensor) else tape.constant(x)
    if h.shape[1] != layers[0][0].shape[0]:
        raise DimensionError(f"input has {h.shape[1]} columns, first layer expects "
                             f"{layers[0][0].shape[0]}")
    last = len(layers) - 1
    for l, (w, b) in enumerate(layers):
        h = T.add(h @ w, b)
        if l < last or activate_last:
            h = T.relu(h)
        if l < last:
            h = T.dropout(h, dropout, rng, training)
        if whiten is not None and (whiten_layers == "all" or (whiten_layers == "hidden" and l < last)
                                   or (whiten_layers == "last" and l == last)):
            h = _normalize(h, norm, whiten)
    return h


def mean_aggregate(h: Tensor, table: PositiveTable) -> Tensor:
    """Row ``i`` is the mean of ``h`` over node ``i``'s positives (zeros if none)."""
    if table.num_nodes != h.shape[0]:
        raise DimensionError(f"table covers {table.num_nodes} nodes, embeddings have {h.shape[0]}")
    if table.neighbors.size and (table.neighbors.min() < 0 or table.neighbors.max() >= h.shape[0]):
        raise IndexError("positive table references a node outside the embedding rows")
    # for k=1 the operator is a 0/1 selection matrix, i.e. a plain gather
    return T.matmul(h.tape.constant(table.aggregation_matrix()), h)
