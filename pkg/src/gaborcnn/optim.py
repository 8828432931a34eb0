"""SGD with Nesterov momentum and a linear-warmup + cosine-decay schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class EpochOutOfRange(IndexError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimConfig:
    base_lr: float = 1e-2
    weight_decay: float = 1e-2
    momentum: float = 0.9
    warmup_epochs: int = 5
    total_epochs: int = 50

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0 < self.warmup_epochs < self.total_epochs:
            raise ValueError("need 0 < warmup_epochs < total_epochs")


def lr_at(epoch: int, cfg: OptimConfig) -> float:
    """Learning rate for a whole epoch.

    Linear ramp reaching ``base_lr`` on the last warmup epoch, then half a
    cosine from ``base_lr`` towards 0 with no restart.
    """
    if not 0 <= epoch < cfg.total_epochs:
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {cfg.total_epochs})")
    if epoch < cfg.warmup_epochs:
        return cfg.base_lr * (epoch + 1) / cfg.warmup_epochs
    progress = (epoch - cfg.warmup_epochs) / (cfg.total_epochs - cfg.warmup_epochs)
    return 0.5 * cfg.base_lr * (1.0 + math.cos(math.pi * progress))


class OptimState:
    """Zero-initialised velocity buffers, one per parameter array."""

    def __init__(self, params):
        self.velocity = [np.zeros_like(p) for p in params]


def sgd_nesterov_step(params, grads, state: OptimState, lr: float, cfg: OptimConfig) -> None:
    """In-place update of ``params`` and ``state``.

    g = grad + wd * p;  v = mu * v + g;  p -= lr * (g + mu * v)
    """
    if not (len(params) == len(grads) == len(state.velocity)):
        raise ValueError("params, grads and velocity buffers differ in count")
    for p, g, v in zip(params, grads, state.velocity):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch {p.shape} / {g.shape} / {v.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradient("gradient contains NaN or Inf")
        d = g + cfg.weight_decay * p
        v *= cfg.momentum
        v += d
        p -= lr * (d + cfg.momentum * v)
