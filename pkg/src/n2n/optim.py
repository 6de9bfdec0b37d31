"""Adam with decoupled weight decay."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np


class Adam:
    """Adaptive-moment optimiser; updates parameter arrays in place.

    Weight decay is decoupled: ``p -= lr * l2 * p`` alongside the moment step.
    """

    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3, l2: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0 or l2 < 0:
            raise ValueError("need lr > 0 and l2 >= 0")
        self.params = list(params)
        self.lr, self.l2 = lr, l2
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[Optional[np.ndarray]],
             components: Optional[dict] = None) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"{len(grads)} gradients for {len(self.params)} parameters")
        for k, (p, g) in enumerate(zip(self.params, grads)):
            if g is not None and g.shape != p.shape:
                raise ValueError(f"gradient {k} has shape {g.shape}, parameter {p.shape}")
            if g is not None and not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {k}; "
                                         f"loss components: {components or {}}")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                g = np.zeros_like(p)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.l2:
                update = update + self.l2 * p
            p -= self.lr * update
