"""Adam with decoupled weight decay, plus the early-stopping controller."""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError
from .layers import Param


class Adam:
    """Adam update with weight decay applied directly to the parameters:

        theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
    """

    def __init__(self, params: list[Param], lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient for {p.name!r}; step refused")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.value
            p.value -= self.lr * update

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


class EarlyStopper:
    """Stops after `patience` consecutive epochs without strict improvement."""

    def __init__(self, patience: int, mode: str = "min"):
        if mode not in ("min", "max"):
            raise ValueError(f"mode must be min or max, got {mode!r}")
        self.patience = patience
        self.mode = mode
        self.best = math.inf if mode == "min" else -math.inf
        self.since_best = 0

    def update(self, metric: float) -> bool:
        """Returns True when training should stop."""
        if not math.isfinite(metric):
            raise NumericError("early-stop metric is non-finite")
        improved = metric < self.best if self.mode == "min" else metric > self.best
        if improved:
            self.best = metric
            self.since_best = 0
            return False
        self.since_best += 1
        return self.since_best >= max(self.patience, 1)

    @property
    def is_best(self) -> bool:
        return self.since_best == 0
