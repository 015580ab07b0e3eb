"""Finite-difference cases: one entry per differentiable op, covering every input argument.

Each case builds its inputs from a seeded generator at float64 and reduces the
op output to a scalar through a fixed random projection, so every output
element contributes to the checked gradient.
"""

from __future__ import annotations

import numpy as np

from stt.autodiff import Tensor, ops


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(-1, 1, size=shape)
    while (np.abs(x) < margin).any():
        bad = np.abs(x) < margin
        x[bad] = rng.uniform(-1, 1, size=int(bad.sum()))
    return x


def _distinct(rng, shape):
    # a shuffled grid keeps every pooling window's max well separated from the runner-up
    n = int(np.prod(shape))
    return rng.permutation(np.linspace(-1, 1, n)).reshape(shape)


def _project(out, seed):
    outs = out if isinstance(out, tuple) else (out,)
    rng = np.random.default_rng(10_000 + seed)
    total = None
    for o in outs:
        weights = Tensor(rng.uniform(-1, 1, size=o.shape), dtype=np.float64)
        term = ops.sum(ops.mul(o, weights))
        total = term if total is None else ops.add(total, term)
    return total


def _case(make_inputs, op):
    def build(seed):
        rng = np.random.default_rng(seed)
        arrays = make_inputs(rng)
        tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
        return tensors, lambda *ts: _project(op(*ts), seed)

    return build


def u(*shape):
    return lambda rng: rng.uniform(-1, 1, size=shape)


CASES = {
    "add": _case(lambda r: [u(3, 4)(r), u(3, 4)(r)], ops.add),
    "add_broadcast": _case(lambda r: [u(3, 4)(r), u(4)(r)], ops.add),
    "sub": _case(lambda r: [u(3, 4)(r), u(3, 1)(r)], ops.sub),
    "mul": _case(lambda r: [u(2, 3, 4)(r), u(2, 3, 4)(r)], ops.mul),
    "div": _case(lambda r: [u(3, 4)(r), r.uniform(0.5, 2.0, size=(3, 4))], ops.div),
    "scale": _case(lambda r: [u(5)(r)], lambda x: ops.scale(x, -2.5)),
    "gate": _case(lambda r: [u(4, 4)(r)], lambda x: ops.gate(x, np.arange(16).reshape(4, 4) % 3 != 0)),
    "relu": _case(lambda r: [_away_from_zero(r, (4, 5))], ops.relu),
    "abs": _case(lambda r: [_away_from_zero(r, (4, 5))], ops.abs),
    "sqrt": _case(lambda r: [r.uniform(0.2, 2.0, size=(6,))], ops.sqrt),
    "square": _case(lambda r: [u(6)(r)], ops.square),
    "sum_all": _case(lambda r: [u(3, 4)(r)], lambda x: ops.sum(x)),
    "sum_axis": _case(lambda r: [u(3, 4, 2)(r)], lambda x: ops.sum(x, axis=(0, 2))),
    "mean": _case(lambda r: [u(3, 4)(r)], lambda x: ops.mean(x, axis=1, keepdims=True)),
    "mean_var": _case(lambda r: [u(3, 4, 5)(r)], lambda x: ops.mean_var(x, (1, 2))),
    "reshape": _case(lambda r: [u(3, 4)(r)], lambda x: ops.reshape(x, (2, 6))),
    "transpose": _case(lambda r: [u(2, 3, 4)(r)], lambda x: ops.transpose(x, (2, 0, 1))),
    "getitem": _case(lambda r: [u(4, 5)(r)], lambda x: ops.getitem(x, np.s_[1:3, ::2])),
    "matmul": _case(lambda r: [u(3, 4)(r), u(4, 2)(r)], ops.matmul),
    "matmul_batched": _case(lambda r: [u(2, 3, 4)(r), u(2, 4, 5)(r)], ops.matmul),
    "linear": _case(lambda r: [u(3, 4)(r), u(4, 5)(r), u(5)(r)], ops.linear),
    "mlp_forward": _case(
        lambda r: [u(3, 4)(r), u(4, 8)(r), r.uniform(0.3, 1.0, size=8), u(8, 4)(r), u(4)(r)], ops.mlp_forward),
    "softmax": _case(lambda r: [r.uniform(-3, 3, size=(3, 5))], ops.softmax),
    "layer_norm": _case(lambda r: [u(4, 6)(r), r.uniform(0.5, 1.5, size=6), u(6)(r)],
                        lambda x, g, b: ops.layer_norm(x, g, b, 1e-5)),
    "conv2d": _case(lambda r: [u(2, 6, 5)(r), u(3, 2, 3, 3)(r), u(3)(r)],
                    lambda x, k, b: ops.conv2d(x, k, 1, b)),
    "conv2d_stride": _case(lambda r: [u(2, 8, 8)(r), u(3, 2, 4, 4)(r)], lambda x, k: ops.conv2d(x, k, 4)),
    "conv2d_stride2": _case(lambda r: [u(1, 7, 7)(r), u(2, 1, 3, 3)(r), u(2)(r)],
                            lambda x, k, b: ops.conv2d(x, k, 2, b)),
    "reflect_pad": _case(lambda r: [u(2, 4, 5)(r)], lambda x: ops.reflect_pad(x, 2)),
    "max_pool2d": _case(lambda r: [_distinct(r, (2, 4, 6))], lambda x: ops.max_pool2d(x, 2)),
    "upsample_nearest": _case(lambda r: [u(2, 3, 2)(r)], lambda x: ops.upsample_nearest(x, 3)),
    "mse": _case(lambda r: [u(3, 4)(r), u(3, 4)(r)], ops.mse),
}

SEEDS = (0, 1, 2)
