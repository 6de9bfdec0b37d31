"""scikit-learn style wrappers around the training pipelines.

The graph is transductive context, so it is passed to ``fit`` next to the
feature matrix. ``transform`` maps any feature rows through the frozen
encoder (whitening then uses the statistics of the rows given).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.model_selection import train_test_split
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_graph, check_labels, check_split
from .graph import Split
from .trainer import CONSTRAINTS, TrainConfig, encode, linear_probe, run


def _holdout_split(y, frac, seed) -> Split:
    # held-out share is halved into validation and test parts
    train, rest = train_test_split(np.arange(y.size), test_size=frac, stratify=y,
                                   random_state=seed)
    val, test = train_test_split(rest, test_size=0.5, random_state=seed)
    return Split(np.sort(train), np.sort(val), np.sort(test))


class _PipelineMixin:
    _pipeline = ""

    def _config(self) -> TrainConfig:
        fields = TrainConfig.__dataclass_fields__
        kw = {k: v for k, v in self.get_params().items() if k in fields}
        kw.setdefault("constraint", "none")
        return TrainConfig(pipeline=self._pipeline, **kw)


class N2NEmbedder(_PipelineMixin, TransformerMixin, BaseEstimator):
    """Unsupervised node-to-neighbourhood encoder (InfoNCE over aggregated positives)."""

    _pipeline = "n2n-url"

    def __init__(self, taps_k=0, positives="taps", tau=5.0, hidden=512, layers=2, out_dim=0,
                 dropout=0.6, l2=0.01, lr=0.001, epochs=2000, batch_size=2048, seed=0):
        self.taps_k = taps_k
        self.positives = positives
        self.tau = tau
        self.hidden = hidden
        self.layers = layers
        self.out_dim = out_dim
        self.dropout = dropout
        self.l2 = l2
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y=None, *, graph):
        graph = check_graph(graph)
        X = check_features(X, graph)
        cfg = self._config()
        self.params_, self.embedding_, self.report_ = run(cfg, graph, X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_features(X)
        return encode(X, self.params_, self._config(),
                      activate_last=False)


class NFN2NEmbedder(_PipelineMixin, TransformerMixin, BaseEstimator):
    """Negative-free edge-pair encoder with a decorrelation constraint (W, WA, WC, ...)."""

    _pipeline = "nf-n2n"

    def __init__(self, constraint="W", beta=0.005, eps=1e-5, whiten_iters=5, whiten_layers="all",
                 hidden=512, layers=2, out_dim=0, dropout=0.6, l2=0.01, lr=0.001, epochs=2000,
                 batch_size=2048, seed=0):
        self.constraint = constraint
        self.beta = beta
        self.eps = eps
        self.whiten_iters = whiten_iters
        self.whiten_layers = whiten_layers
        self.hidden = hidden
        self.layers = layers
        self.out_dim = out_dim
        self.dropout = dropout
        self.l2 = l2
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    def fit(self, X, y=None, *, graph):
        graph = check_graph(graph)
        X = check_features(X, graph)
        self.params_, self.embedding_, self.report_ = run(self._config(), graph, X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_features(X)
        return encode(X, self.params_, self._config(), norm=CONSTRAINTS[self.constraint][0])


class N2NClassifier(_PipelineMixin, ClassifierMixin, BaseEstimator):
    """Jointly trained MLP classifier: (1 - alpha) CE + alpha InfoNCE."""

    _pipeline = "n2n-jl"

    def __init__(self, alpha=0.9, tau=5.0, taps_k=0, positives="taps", hidden=512, layers=2,
                 dropout=0.6, l2=0.01, lr=0.001, epochs=2000, patience=200, val_frac=0.2, seed=0):
        self.alpha = alpha
        self.tau = tau
        self.taps_k = taps_k
        self.positives = positives
        self.hidden = hidden
        self.layers = layers
        self.dropout = dropout
        self.l2 = l2
        self.lr = lr
        self.epochs = epochs
        self.patience = patience
        self.val_frac = val_frac
        self.seed = seed

    def fit(self, X, y, *, graph, split=None):
        """Train on ``split.train`` with early stopping on ``split.val``.

        Without a split, a stratified ``val_frac`` share is held out and
        halved into validation and test nodes.
        """
        graph = check_graph(graph)
        X = check_features(X, graph)
        y = check_labels(y, graph.num_nodes)
        if split is None:
            split = _holdout_split(y, self.val_frac, self.seed)
        split = check_split(split, graph.num_nodes)
        cfg = self._config()
        self.params_, _, self.report_ = run(cfg, graph, X, y, split)
        self.classes_ = np.arange(int(y.max()) + 1)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        return encode(check_features(X), self.params_, self._config(),
                      activate_last=False)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


class LinearProbe(ClassifierMixin, BaseEstimator):
    """Softmax regression on frozen embeddings with validation-based model selection."""

    def __init__(self, epochs=300, lr=0.01, l2=0.01, val_frac=0.2, seed=0):
        self.epochs = epochs
        self.lr = lr
        self.l2 = l2
        self.val_frac = val_frac
        self.seed = seed

    def fit(self, X, y, split=None):
        X = check_features(X)
        if not isinstance(X, np.ndarray):
            X = X.toarray()
        y = check_labels(y, X.shape[0])
        if split is None:
            split = _holdout_split(y, self.val_frac, self.seed)
        split = check_split(split, X.shape[0])
        self.result_ = linear_probe(X, y, split, self.epochs, self.lr, self.l2, self.seed)
        self.classes_ = np.arange(int(y.max()) + 1)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "result_")
        X = check_features(X)
        if not isinstance(X, np.ndarray):
            X = X.toarray()
        return self.classes_[self.result_.predict(X)]

