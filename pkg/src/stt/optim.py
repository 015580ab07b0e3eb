"""Adam with bias correction and a warmup/inverse-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: Mapping[str, Tensor], **hyper) -> "AdamState":
        state = cls(**hyper)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def lr_at(t: int, lr0: float, warmup_steps: int, decay: float = 5e-5) -> float:
    """Linear warmup to ``lr0`` over ``warmup_steps`` then ``1 / (1 + decay * steps_past_warmup)``."""
    if t < 1:
        raise ValueError(f"step index starts at 1, got {t}")
    ramp = 1.0 if warmup_steps <= 0 else min(t / warmup_steps, 1.0)
    return lr0 * ramp / (1.0 + decay * max(0, t - warmup_steps))


def adam_step(params: Mapping[str, Tensor], state: AdamState, lr: float) -> None:
    """One in-place Adam update of every parameter from its ``.grad``."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)
