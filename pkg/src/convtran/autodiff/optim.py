"""Adam with bias correction and validation-loss early stopping."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .tensor import Tensor


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        """Apply one update from the accumulated grads, then clear them.

        Parameters whose ``grad`` is None are left untouched; if every grad is
        missing nothing was backpropagated and the call is an error.
        """
        missing = [i for i, p in enumerate(self.params) if p.grad is None]
        if len(missing) == len(self.params):
            raise RuntimeError("adam step called before any gradients were computed")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                # parameter not reached by this loss, e.g. an unused encoding
                continue
            m, v = self.m[i], self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            step = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - step).astype(p.dtype, copy=False)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class EarlyStopper:
    """Tracks the best validation loss and signals a stop after ``patience`` flat epochs."""

    patience: int = 20
    min_delta: float = 0.0
    best_val_loss: float = math.inf
    best_epoch: int = -1
    epochs_since_best: int = 0
    best_checkpoint: Any = None
    epoch: int = 0
    error: str | None = None
    history: list = field(default_factory=list)

    def update(self, val_loss: float, checkpoint: Any = None) -> str:
        """Record one epoch; returns ``"continue"`` or ``"stop"``."""
        self.epoch += 1
        self.history.append(val_loss)
        if not np.isfinite(val_loss):
            self.error = f"non-finite validation loss {val_loss!r} at epoch {self.epoch}"
            return "stop"
        if val_loss < self.best_val_loss - self.min_delta:
            self.best_val_loss = float(val_loss)
            self.best_epoch = self.epoch
            self.epochs_since_best = 0
            self.best_checkpoint = copy.deepcopy(checkpoint)
            return "continue"
        self.epochs_since_best += 1
        return "stop" if self.epochs_since_best >= self.patience else "continue"


def early_stop_update(stopper: EarlyStopper, val_loss: float, checkpoint: Any = None) -> str:
    return stopper.update(val_loss, checkpoint)
