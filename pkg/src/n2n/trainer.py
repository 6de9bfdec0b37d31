"""Training pipelines, linear probe, configuration, and run reports."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .encoder import WHITEN_LAYERS, EncoderParams, WhitenConfig, mean_aggregate, mlp_forward
from .graph import Graph, Split
from .metrics import collapse_report, micro_f1
from .objectives import (LossValue, auto_reg, combine, cross_entropy, cross_reg, infonce,
                         jl_combine, mse_pairs, pair_infonce)
from .optim import Adam
from .taps import PositiveTable, build_positive_table, full_neighborhood_table, \
    random_positive_table
from .tensor import Tape

logger = logging.getLogger(__name__)

PIPELINES = ("n2n-jl", "n2n-url", "nf-n2n", "contrastive-baseline", "mlp-mse-baseline")
# constraint -> (normalisation, mse, auto-reg, cross-reg)
CONSTRAINTS = {
    "none": (None, True, False, False),
    "A": (None, True, True, False),
    "C": (None, False, False, True),
    "BN": ("bn", True, False, False),
    "BNA": ("bn", True, True, False),
    "BNC": ("bn", False, False, True),
    "W": ("zca", True, False, False),
    "WA": ("zca", True, True, False),
    "WC": ("zca", False, False, True),
}
STREAMS = {"init": 0, "dropout": 1, "shuffle": 2, "split": 3, "probe": 4, "positives": 5}
FULL_BATCH_LIMIT = 20000


class ConfigError(ValueError):
    pass


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named purpose, derived from the run seed."""
    return np.random.default_rng([int(seed) & (2 ** 64 - 1), STREAMS[name]])


@dataclass(frozen=True)
class TrainConfig:
    pipeline: str = "nf-n2n"
    constraint: str = "W"
    dataset: str = "cora"
    taps_k: int = 0
    positives: str = "taps"
    alpha: float = 0.9
    tau: float = 5.0
    beta: float = 0.005
    eps: float = 1e-5
    whiten_iters: int = 5
    whiten_layers: str = "all"
    hidden: int = 512
    layers: int = 2
    out_dim: int = 0
    dropout: float = 0.6
    l2: float = 0.01
    lr: float = 0.001
    epochs: int = 2000
    batch_size: int = 2048
    patience: int = 200
    eval_every: int = 1
    probe_epochs: int = 300
    probe_lr: float = 0.01
    probe_l2: float = 0.01
    train_frac: float = 0.6
    val_frac: float = 0.2
    split_file: str = ""
    seed: int = 0

    def __post_init__(self):
        problems = []

        def need(ok, msg):
            if not ok:
                problems.append(msg)

        need(self.pipeline in PIPELINES, f"pipeline must be one of {PIPELINES}")
        need(self.constraint in CONSTRAINTS, f"constraint must be one of {sorted(CONSTRAINTS)}")
        need(0 <= self.taps_k <= 5, "taps_k must be 0 (all neighbours) or 1..5")
        need(self.positives in ("taps", "random"), "positives must be 'taps' or 'random'")
        need(self.positives == "taps" or self.taps_k >= 1, "random positives need taps_k >= 1")
        need(0.0 <= self.alpha <= 1.0, "alpha must lie in [0, 1]")
        need(self.tau > 0, "tau must be positive")
        need(self.beta >= 0, "beta must be non-negative")
        need(self.eps > 0, "eps must be positive")
        need(self.whiten_iters >= 1, "whiten_iters must be >= 1")
        need(self.whiten_layers in WHITEN_LAYERS, f"whiten_layers must be one of {WHITEN_LAYERS}")
        need(self.hidden >= 1 and self.layers >= 1 and self.out_dim >= 0, "bad layer sizes")
        need(0.0 <= self.dropout < 1.0, "dropout must lie in [0, 1)")
        need(self.l2 >= 0 and self.probe_l2 >= 0, "l2 must be non-negative")
        need(self.lr > 0 and self.probe_lr > 0, "learning rates must be positive")
        need(self.epochs >= 1 and self.probe_epochs >= 1, "epochs must be >= 1")
        need(self.batch_size >= 2, "batch_size must be >= 2")
        need(self.patience >= 0 and self.eval_every >= 1, "bad early-stopping settings")
        if self.pipeline in ("nf-n2n", "contrastive-baseline", "mlp-mse-baseline"):
            need(self.taps_k == 0 and self.positives == "taps",
                 f"{self.pipeline} pairs nodes along edges and takes no TAPS settings")
        if self.pipeline != "nf-n2n":
            need(self.constraint == "none", f"constraint applies only to nf-n2n, "
                                            f"use constraint='none' for {self.pipeline}")
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        coerced = {}
        for key, value in data.items():
            kind = known[key].type
            try:
                if kind == "int":
                    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                        raise TypeError
                    coerced[key] = int(value)
                elif kind == "float":
                    if isinstance(value, bool):
                        raise TypeError
                    coerced[key] = float(value)
                else:
                    if not isinstance(value, str):
                        raise TypeError
                    coerced[key] = value
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key!r} expects {kind}, got {value!r}") from None
        return cls(**coerced)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @property
    def whiten(self) -> Optional[WhitenConfig]:
        return WhitenConfig(self.whiten_iters, self.eps)


@dataclass
class RunReport:
    config: dict
    seed: int
    trace: list = field(default_factory=list)
    val_f1: Optional[float] = None
    test_f1: Optional[float] = None
    best_epoch: Optional[int] = None
    collapse: Optional[dict] = None
    notes: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.trace)

    def loss_series(self, component: str = "total") -> np.ndarray:
        return np.array([row[component] for row in self.trace])

    def to_dict(self, include_timing: bool = True) -> dict:
        out = dataclasses.asdict(self)
        out["epochs_run"] = self.epochs_run
        if not include_timing:
            out.pop("wall_clock")
        return out

    def write(self, directory, include_timing: bool = True) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(
            json.dumps(self.to_dict(include_timing), indent=2) + "\n", encoding="utf-8")
        self.write_trace(directory / "loss_trace.csv")

    def write_trace(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "component", "value"])
            for row in self.trace:
                for k, v in row.items():
                    if k != "epoch":
                        w.writerow([row["epoch"], k, repr(float(v))])


@dataclass
class ProbeResult:
    weight: np.ndarray
    bias: np.ndarray
    val_f1: float
    test_f1: float
    best_epoch: int
    mean: np.ndarray
    scale: np.ndarray

    def predict(self, embeddings) -> np.ndarray:
        z = (np.asarray(embeddings) - self.mean) / self.scale
        return np.argmax(z @ self.weight + self.bias, axis=1)


# ---------------------------------------------------------------------------
# helpers


def _as_input(x):
    if sp.issparse(x):
        x = sp.csr_matrix(x, dtype=np.float64)
        return x if x.nnz < 0.25 * x.shape[0] * x.shape[1] else x.toarray()
    return np.asarray(x, dtype=np.float64)


def _rows(x, idx):
    return x[idx]


def _layer_dims(n_in: int, cfg: TrainConfig, n_out: Optional[int] = None) -> list[int]:
    out = n_out if n_out is not None else (cfg.out_dim or cfg.hidden)
    return [n_in] + [cfg.hidden] * (cfg.layers - 1) + [out]


def _positive_table(g: Graph, cfg: TrainConfig) -> PositiveTable:
    if cfg.positives == "random":
        return random_positive_table(g, cfg.taps_k, substream(cfg.seed, "positives"))
    if cfg.taps_k == 0:
        return full_neighborhood_table(g)
    return build_positive_table(g, cfg.taps_k)


def _epoch_row(epoch: int, parts: list[dict]) -> dict:
    row = {"epoch": epoch}
    for key in parts[0]:
        row[key] = float(np.mean([p[key] for p in parts]))
    return row


def _require_labels(y, split):
    if y is None or split is None:
        raise ValueError("this step needs node labels and a split")
    return np.asarray(y, dtype=np.int64)


def encode(x, params: EncoderParams, cfg: TrainConfig, norm: Optional[str] = None,
           activate_last: bool = True) -> np.ndarray:
    """Eval-mode embeddings for every row of ``x`` (whitening uses full-batch statistics)."""
    whiten = cfg.whiten if norm is not None else None
    h = mlp_forward(_as_input(x), params, Tape(), whiten=whiten, training=False,
                    whiten_layers=cfg.whiten_layers, norm=norm or "zca",
                    activate_last=activate_last)
    return h.numpy().copy()


# ---------------------------------------------------------------------------
# linear probe


def linear_probe(embeddings, y, split: Split, epochs: int = 300, lr: float = 0.01,
                 l2: float = 0.01, seed: int = 0) -> ProbeResult:
    """Softmax regression on frozen embeddings; reports test F1 at the best validation epoch.

    Embeddings are standardised with training-set statistics first.
    """
    y = _require_labels(y, split)
    e = np.asarray(embeddings, dtype=np.float64)
    if e.shape[0] != y.size:
        raise T.DimensionError(f"{e.shape[0]} embeddings for {y.size} labels")
    mu = e[split.train].mean(axis=0, keepdims=True)
    sd = e[split.train].std(axis=0, keepdims=True)
    sd = np.where(sd > 1e-12, sd, 1.0)
    z = (e - mu) / sd
    n_classes = int(y.max()) + 1
    rng = substream(seed, "probe")
    limit = np.sqrt(6.0 / (z.shape[1] + n_classes))
    w = rng.uniform(-limit, limit, size=(z.shape[1], n_classes))
    b = np.zeros((1, n_classes))
    opt = Adam([w, b], lr=lr, l2=l2)
    best = (-1.0, 0.0, 0, w.copy(), b.copy())
    for epoch in range(1, epochs + 1):
        tape = Tape()
        wv, bv = tape.variable(w), tape.variable(b)
        logits = T.add(tape.constant(z) @ wv, bv)
        loss = T.softmax_cross_entropy(logits, y, split.train)
        tape.backward(loss)
        opt.step([wv.grad, bv.grad], {"probe_ce": loss.item()})
        pred = np.argmax(z @ w + b, axis=1)
        val = micro_f1(pred, y, split.val)
        if val > best[0]:
            best = (val, micro_f1(pred, y, split.test), epoch, w.copy(), b.copy())
    val, test, epoch, bw, bb = best
    return ProbeResult(bw, bb, val, test, epoch, mu, sd)


# ---------------------------------------------------------------------------
# N2N with joint learning


def _jl_loss(h, y, split, table, cfg) -> LossValue:
    ce = cross_entropy(h, y, split.train)
    if cfg.alpha > 0:
        nce = infonce(h, mean_aggregate(h, table), cfg.tau)
    else:
        nce = LossValue(h.tape.constant(0.0), {"infonce": 0.0})
    return jl_combine(ce, nce, cfg.alpha)


def _ce_loss(h, y, split, table, cfg) -> LossValue:
    loss = cross_entropy(h, y, split.train)
    loss.components["total"] = loss.value
    return loss


def _supervised_loop(g, x, y, split, cfg, table, loss_fn):
    start = time.perf_counter()
    x = _as_input(x)
    n_classes = int(y.max()) + 1
    params = EncoderParams.init(_layer_dims(x.shape[1], cfg, n_classes), substream(cfg.seed, "init"))
    opt = Adam(params.flat(), lr=cfg.lr, l2=cfg.l2)
    rng_drop = substream(cfg.seed, "dropout")
    report = RunReport(cfg.to_dict(), cfg.seed)
    best_val, best_params, best_epoch, since = -1.0, params.copy(), 0, 0
    for epoch in range(1, cfg.epochs + 1):
        tape = Tape()
        layers = params.on_tape(tape)
        h = mlp_forward(x, layers, tape, training=True, dropout=cfg.dropout, rng=rng_drop,
                        activate_last=False)
        loss = loss_fn(h, y, split, table, cfg)
        tape.backward(loss.tensor)
        opt.step([t.grad for pair in layers for t in pair], loss.components)
        report.trace.append({"epoch": epoch, **loss.components})
        if epoch % cfg.eval_every == 0:
            pred = np.argmax(encode(x, params, cfg, activate_last=False), axis=1)
            val = micro_f1(pred, y, split.val)
            if val > best_val:
                best_val, best_params, best_epoch, since = val, params.copy(), epoch, 0
                report.test_f1 = micro_f1(pred, y, split.test)
            else:
                since += cfg.eval_every
            if cfg.patience and since >= cfg.patience:
                report.notes.append(f"early stop at epoch {epoch}")
                break
    report.val_f1, report.best_epoch = best_val, best_epoch
    report.wall_clock = time.perf_counter() - start
    return best_params, report


def train_n2n_jl(g: Graph, x, y, split: Split, cfg: TrainConfig,
                 table: Optional[PositiveTable] = None):
    """Full-batch CE + InfoNCE training; returns the best-validation parameters.

    The last layer is linear and doubles as the classifier head.
    """
    y = _require_labels(y, split)
    if cfg.pipeline != "n2n-jl":
        raise ValueError("config pipeline must be n2n-jl")
    table = table if table is not None else _positive_table(g, cfg)
    return _supervised_loop(g, x, y, split, cfg, table, _jl_loss)


def train_supervised(g: Graph, x, y, split: Split, cfg: TrainConfig):
    """Plain cross-entropy MLP with the same architecture and early stopping."""
    y = _require_labels(y, split)
    return _supervised_loop(g, x, y, split, cfg, None, _ce_loss)


# ---------------------------------------------------------------------------
# N2N unsupervised


def _url_batches(n: int, cfg: TrainConfig, rng: np.random.Generator):
    if n <= FULL_BATCH_LIMIT:
        return [None]
    perm = rng.permutation(n)
    return [perm[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]


def _url_step(x, table, params, opt, cfg, rng_drop, nodes):
    tape = Tape()
    layers = params.on_tape(tape)
    if nodes is None:
        h = mlp_forward(x, layers, tape, training=True, dropout=cfg.dropout, rng=rng_drop,
                        activate_last=False)
        a = mean_aggregate(h, table)
    else:
        agg = table.aggregation_matrix()[nodes]
        needed = np.unique(np.concatenate([nodes, agg.indices]))
        h_sub = mlp_forward(_rows(x, needed), layers, tape, training=True, dropout=cfg.dropout,
                            rng=rng_drop, activate_last=False)
        local = sp.csr_matrix(agg[:, needed])
        a = T.matmul(tape.constant(local), h_sub)
        h = T.take_rows(h_sub, np.searchsorted(needed, nodes))
    loss = infonce(h, a, cfg.tau)
    loss.components["total"] = loss.value
    tape.backward(loss.tensor)
    opt.step([t.grad for pair in layers for t in pair], loss.components)
    return loss.components


def train_n2n_url(g: Graph, x, cfg: TrainConfig, y=None, split: Optional[Split] = None,
                  table: Optional[PositiveTable] = None):
    """InfoNCE pre-training; probes the frozen embeddings when labels are given.

    As in the joint pipeline the last layer is linear.
    """
    if cfg.pipeline != "n2n-url":
        raise ValueError("config pipeline must be n2n-url")
    start = time.perf_counter()
    x = _as_input(x)
    table = table if table is not None else _positive_table(g, cfg)
    params = EncoderParams.init(_layer_dims(x.shape[1], cfg), substream(cfg.seed, "init"))
    opt = Adam(params.flat(), lr=cfg.lr, l2=cfg.l2)
    rng_drop, rng_shuffle = substream(cfg.seed, "dropout"), substream(cfg.seed, "shuffle")
    report = RunReport(cfg.to_dict(), cfg.seed)
    if table.skipped:
        report.notes.append(f"{table.skipped} nodes without positives")
    for epoch in range(1, cfg.epochs + 1):
        parts = [_url_step(x, table, params, opt, cfg, rng_drop, nodes)
                 for nodes in _url_batches(g.num_nodes, cfg, rng_shuffle)]
        report.trace.append(_epoch_row(epoch, parts))
    emb = encode(x, params, cfg, activate_last=False)
    _finish(report, emb, g, y, split, cfg)
    report.wall_clock = time.perf_counter() - start
    return params, emb, report


# ---------------------------------------------------------------------------
# pair-based pipelines (NF-N2N and the contrastive baseline)


def pair_batches(g: Graph, batch_size: int, rng: np.random.Generator):
    """Both orientations of every edge, shuffled, cut into batches of at most ``batch_size``."""
    src, dst = g.directed_edges()
    perm = rng.permutation(src.size)
    src, dst = src[perm], dst[perm]
    for i in range(0, src.size, batch_size):
        yield src[i:i + batch_size], dst[i:i + batch_size]


def _pair_loss(ha, hv, cfg: TrainConfig) -> LossValue:
    if cfg.pipeline == "contrastive-baseline":
        loss = pair_infonce(ha, hv, cfg.tau)
        loss.components["total"] = loss.value
        return loss
    _, use_mse, use_ar, use_cr = CONSTRAINTS[cfg.constraint]
    parts = []
    if use_mse:
        parts.append(mse_pairs(ha, hv))
    if use_ar:
        ar = combine(auto_reg(ha, cfg.beta, cfg.eps), auto_reg(hv, cfg.beta, cfg.eps))
        half = T.scale(ar.tensor, 0.5)
        parts.append(LossValue(half, {"auto_reg": half.item()}))
    if use_cr:
        parts.append(cross_reg(ha, hv, cfg.beta, cfg.eps))
    return combine(*parts)


def _norm_of(cfg: TrainConfig) -> Optional[str]:
    if cfg.pipeline != "nf-n2n":
        return None
    return CONSTRAINTS[cfg.constraint][0]


def train_pairs(g: Graph, x, cfg: TrainConfig, y=None, split: Optional[Split] = None):
    """Edge-pair training shared by NF-N2N, the MLP-MSE baseline and the contrastive baseline."""
    if cfg.pipeline not in ("nf-n2n", "contrastive-baseline", "mlp-mse-baseline"):
        raise ValueError(f"pipeline {cfg.pipeline} is not pair-based")
    if g.num_edges == 0:
        raise ValueError("graph has no edges to pair")
    start = time.perf_counter()
    x = _as_input(x)
    norm = _norm_of(cfg)
    whiten = cfg.whiten if norm else None
    params = EncoderParams.init(_layer_dims(x.shape[1], cfg), substream(cfg.seed, "init"))
    opt = Adam(params.flat(), lr=cfg.lr, l2=cfg.l2)
    rng_drop, rng_shuffle = substream(cfg.seed, "dropout"), substream(cfg.seed, "shuffle")
    report = RunReport(cfg.to_dict(), cfg.seed)
    if g.isolated.any():
        report.notes.append(f"{int(g.isolated.sum())} isolated nodes take no part in pairs")
    for epoch in range(1, cfg.epochs + 1):
        parts = []
        for a_idx, v_idx in pair_batches(g, cfg.batch_size, rng_shuffle):
            if a_idx.size < 2:
                continue
            tape = Tape()
            layers = params.on_tape(tape)
            kw = dict(whiten=whiten, training=True, dropout=cfg.dropout, rng=rng_drop,
                      whiten_layers=cfg.whiten_layers, norm=norm or "zca")
            ha = mlp_forward(_rows(x, a_idx), layers, tape, **kw)
            hv = mlp_forward(_rows(x, v_idx), layers, tape, **kw)
            loss = _pair_loss(ha, hv, cfg)
            tape.backward(loss.tensor)
            opt.step([t.grad for pair in layers for t in pair], loss.components)
            parts.append(loss.components)
        report.trace.append(_epoch_row(epoch, parts))
    emb = encode(x, params, cfg, norm=norm)
    _finish(report, emb, g, y, split, cfg)
    report.wall_clock = time.perf_counter() - start
    return params, emb, report


def train_nf_n2n(g: Graph, x, cfg: TrainConfig, y=None, split: Optional[Split] = None):
    if cfg.pipeline not in ("nf-n2n", "mlp-mse-baseline"):
        raise ValueError("config pipeline must be nf-n2n or mlp-mse-baseline")
    return train_pairs(g, x, cfg, y, split)


def _finish(report: RunReport, emb, g, y, split, cfg: TrainConfig) -> None:
    report.collapse = collapse_report(emb, g).to_dict()
    if y is not None and split is not None:
        probe = linear_probe(emb, y, split, cfg.probe_epochs, cfg.probe_lr, cfg.probe_l2, cfg.seed)
        report.val_f1, report.test_f1, report.best_epoch = probe.val_f1, probe.test_f1, probe.best_epoch


def run(cfg: TrainConfig, g: Graph, x, y=None, split: Optional[Split] = None):
    """Dispatch on ``cfg.pipeline``; returns ``(params, embeddings, report)``."""
    if cfg.pipeline == "n2n-jl":
        params, report = train_n2n_jl(g, x, y, split, cfg)
        emb = encode(_as_input(x), params, cfg, activate_last=False)
        report.collapse = collapse_report(emb, g).to_dict()
        return params, emb, report
    if cfg.pipeline == "n2n-url":
        return train_n2n_url(g, x, cfg, y, split)
    return train_pairs(g, x, cfg, y, split)
