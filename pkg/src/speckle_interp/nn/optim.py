"""Learning-rate schedule and gradient-descent updates."""

from __future__ import annotations

import math

import numpy as np


def cosine_lr(epoch: int, total: int, lr0: float, lr_min: float = 0.0) -> float:
    if total < 1 or not 0 <= epoch <= total:
        raise ValueError(f"need 0 <= epoch <= total and total >= 1, got epoch={epoch}, total={total}")
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * epoch / total))


class SGD:
    """Gradient descent with optional heavy-ball momentum.

    ``momentum=0`` is plain SGD: ``w <- w - lr * grad``.
    """

    def __init__(self, model, momentum: float = 0.0):
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        self.model = model
        self.momentum = momentum
        self._velocity: list[np.ndarray] | None = None

    def step(self, lr: float) -> None:
        if not getattr(self.model, "_backward_done", False):
            raise RuntimeError("sgd step requested before backward populated the gradients")
        params = self.model.parameters()
        if self.momentum:
            if self._velocity is None:
                self._velocity = [np.zeros_like(p.data) for p in params]
            for p, v in zip(params, self._velocity):
                v *= self.momentum
                v += p.grad
                p.data -= (lr * v).astype(p.data.dtype)
        else:
            for p in params:
                p.data -= (lr * p.grad).astype(p.data.dtype)
        self.model.zero_grad()


def sgd_step(model, lr: float) -> None:
    """One plain gradient-descent update; gradients are cleared afterwards."""
    SGD(model).step(lr)
