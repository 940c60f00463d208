from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from dsvpr.numerics import Tensor

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def optimizer_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = ADAM_EPS,
) -> np.ndarray:
    """One bias-corrected adaptive-moment update; mutates ``state`` and returns the new parameter."""
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.t)
    v_hat = state.v / (1.0 - beta2**state.t)
    return (param - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)


@dataclass
class Adam:
    params: Mapping[str, Tensor]
    lr: float
    state: dict[str, AdamState] = field(default_factory=dict)

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                continue
            st = self.state.get(name)
            if st is None:
                st = self.state[name] = AdamState(np.zeros_like(p.data), np.zeros_like(p.data))
            p.data = optimizer_step(p.data, p.grad, st, self.lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
