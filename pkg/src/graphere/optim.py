"""AdamW with decoupled weight decay over named parameter groups."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class ParamGroup:
    params: dict[str, Tensor]
    lr: float


@dataclass
class AdamWState:
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


class AdamW:
    """Bias-corrected Adam with weight decay applied directly to parameters.

    Update order per step: p *= (1 - lr*wd), then p -= lr * m_hat/(sqrt(v_hat)+eps).
    Gradients are zeroed after each step.
    """

    def __init__(self, groups: list[ParamGroup], betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        if not groups:
            raise ValueError("AdamW needs at least one parameter group")
        for g in groups:
            if g.lr <= 0:
                raise ValueError(f"learning rate must be > 0, got {g.lr}")
        if weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {weight_decay}")
        self.groups = groups
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamWState()
        for g in groups:
            for name, p in g.params.items():
                self.state.first_moment[name] = np.zeros_like(p.data)
                self.state.second_moment[name] = np.zeros_like(p.data)

    def step(self) -> None:
        self.state.step_count += 1
        t = self.state.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for g in self.groups:
            for name, p in g.params.items():
                if p.grad is None:
                    raise ValueError(f"parameter '{name}' has no gradient; run backward() first")
                grad = p.grad
                m = self.state.first_moment[name]
                v = self.state.second_moment[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad * grad
                if self.weight_decay != 0.0:
                    p.data = p.data * (1.0 - g.lr * self.weight_decay)
                step_size = g.lr * math.sqrt(bc2) / bc1
                p.data = p.data - step_size * m / (np.sqrt(v) + self.eps)
                p.grad = None

    def zero_grad(self) -> None:
        for g in self.groups:
            for p in g.params.values():
                p.grad = None
