"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps vanishing gradients from dividing by zero."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    *,
    samples: int = 5,
    h: float = 1e-4,
    seed: int = 0,
) -> float:
    """Compare backprop against central differences on ``samples`` random
    elements of every input that requires grad.

    ``fn`` must return a scalar tensor.  Returns the worst relative error seen.
    """
    rng = np.random.default_rng(seed)
    for t in inputs:
        t.grad = None
    fn(*inputs).backward()
    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        assert t.grad is not None, f"no gradient reached input {t!r}"
        flat = t.data.reshape(-1)
        grad = t.grad.reshape(-1)
        picks = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        for i in picks:
            original = flat[i]
            with no_grad():
                flat[i] = original + h
                up = fn(*inputs).item()
                flat[i] = original - h
                down = fn(*inputs).item()
            flat[i] = original
            worst = max(worst, relative_error(float(grad[i]), (up - down) / (2 * h)))
    return worst
