"""Parameters and plain SGD with momentum, weight decay, and the
two-step 10x learning-rate drop schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


@dataclass(eq=False)
class Parameter:
    """A trainable tensor with its gradient and momentum buffer."""

    value: np.ndarray
    grad: np.ndarray = field(default=None)  # type: ignore[assignment]
    momentum: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.momentum is None:
            self.momentum = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape or self.momentum.shape != self.value.shape:
            raise ValueError("value/grad/momentum shapes must match")


@dataclass(frozen=True)
class OptimizerConfig:
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    total_iterations: int = 6000

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.total_iterations < 1:
            raise ValueError("total_iterations must be >= 1")


def lr_drop_iterations(total_iterations: int) -> tuple[int, int]:
    """The two iterations where the rate divides by 10: floor(2I/3.5)
    and floor(3I/3.5), computed exactly as floor(4I/7), floor(6I/7)."""
    return (4 * total_iterations) // 7, (6 * total_iterations) // 7


def learning_rate(cfg: OptimizerConfig, iteration: int) -> float:
    drops = sum(1 for thr in lr_drop_iterations(cfg.total_iterations) if iteration >= thr)
    return cfg.base_lr * 0.1**drops


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.grad[...] = 0


def sgd_step(params: Iterable[Parameter], cfg: OptimizerConfig, iteration: int) -> float:
    """Classic (non-Nesterov) momentum update with weight decay folded
    into the gradient. Returns the learning rate used."""
    lr = learning_rate(cfg, iteration)
    for p in params:
        g = p.grad + cfg.weight_decay * p.value
        p.momentum *= cfg.momentum
        p.momentum += g
        p.value -= lr * p.momentum
    return lr
