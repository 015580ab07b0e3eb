"""Differentiable operations over :class:`Tensor`.

Image-like tensors are laid out channel-first, ``(C, H, W)``.  Broadcasting is
limited to what numpy does for elementwise arithmetic; gradients are summed
back to each operand's shape.
"""

from __future__ import annotations

import builtins

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, as_tensor


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine dims {a.dims} and {b.dims}") from None


# -- elementwise ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._result(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._result(out, (a, b), backward, "div")


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a Python constant."""
    x = as_tensor(x)
    factor = float(factor)
    return Tensor._result(x.data * x.data.dtype.type(factor), (x,), lambda g: (g * factor,), "scale")


def gate(x: Tensor, keep: np.ndarray) -> Tensor:
    """Zero the positions where ``keep`` is False; gradients pass only where it is True."""
    x = as_tensor(x)
    if keep.shape != x.shape:
        raise ShapeError(f"gate: mask dims {list(keep.shape)} vs tensor dims {x.dims}")
    m = keep.astype(x.dtype)
    return Tensor._result(x.data * m, (x,), lambda g: (g * m,), "gate")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return Tensor._result(np.where(pos, x.data, 0).astype(x.dtype), (x,), lambda g: (g * pos,), "relu")


def abs(x: Tensor) -> Tensor:
    x = as_tensor(x)
    sign = np.sign(x.data)
    return Tensor._result(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def sqrt(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return Tensor._result(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def square(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return Tensor._result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


# -- reductions and layout ------------------------------------------------------


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._result(np.asarray(out, dtype=x.dtype), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = range(x.ndim) if axis is None else ((axis,) if isinstance(axis, int) else axis)
    count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis, keepdims), 1.0 / count)


def mean_var(x: Tensor, axes) -> tuple[Tensor, Tensor]:
    """Mean and population variance over ``axes`` (kept as size-1 dims)."""
    mu = mean(x, axes, keepdims=True)
    centered = sub(x, mu)
    return mu, mean(square(centered), axes, keepdims=True)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view dims {x.dims} as {list(shape)}") from None
    return Tensor._result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor._result(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                          lambda g: (g.transpose(inverse),), "transpose")


def getitem(x: Tensor, index) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return Tensor._result(np.array(x.data[index]), (x,), backward, "getitem")


# -- linear algebra -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``(..., m, k) @ (..., k, n)``; leading dims must match exactly."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible dims {a.dims} and {b.dims}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return Tensor._result(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight (+ bias)`` for a 2-D token matrix."""
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def mlp_forward(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    return linear(relu(linear(x, w1, b1)), w2, b2)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis (max-subtracted)."""
    x = as_tensor(x)
    e = np.exp(x.data - x.data.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor._result(out, (x,), backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: last dim {c} vs gamma {gamma.dims} / beta {beta.dims}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    rstd = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * rstd
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx = None
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                         - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._result((xhat * gamma.data + beta.data).astype(x.dtype), (x, gamma, beta), backward, "layer_norm")


# -- spatial ops on (C, H, W) ---------------------------------------------------


def _require_chw(x: Tensor, op: str) -> None:
    if x.ndim != 3:
        raise ShapeError(f"{op}: expected (C, H, W), got dims {x.dims}")


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, bias: Tensor | None = None) -> Tensor:
    """Valid cross-correlation of a ``(C_in, H, W)`` input with ``(C_out, C_in, kh, kw)``."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    _require_chw(x, "conv2d")
    if kernel.ndim != 4 or kernel.shape[1] != x.shape[0]:
        raise ShapeError(f"conv2d: kernel dims {kernel.dims} do not fit input dims {x.dims}")
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    c_out, c_in, kh, kw = kernel.shape
    _, h, w = x.shape
    if kh > h or kw > w:
        raise ShapeError(f"conv2d: kernel dims {kernel.dims} larger than input dims {x.dims}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"conv2d: bias dims {bias.dims} vs {c_out} output channels")
    ho, wo = (h - kh) // stride + 1, (w - kw) // stride + 1

    windows = sliding_window_view(x.data, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c_in * kh * kw, ho * wo)
    k2 = kernel.data.reshape(c_out, -1)
    out = k2 @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(c_out, ho, wo)
    keep_cols = cols if kernel.requires_grad else None

    def backward(g):
        g2 = g.reshape(c_out, ho * wo)
        gx = None
        if x.requires_grad:
            gcols = (k2.T @ g2).reshape(c_in, kh, kw, ho, wo)
            gx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    gx[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, i, j]
        gk = (g2 @ keep_cols.T).reshape(kernel.shape) if keep_cols is not None else None
        gb = g2.sum(axis=1) if bias is not None else None
        return gx, gk, gb

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._result(out, parents, backward, "conv2d")


def _fold_reflection(g: np.ndarray, p: int, axis: int) -> np.ndarray:
    n = g.shape[axis] - 2 * p
    take = lambda start, stop: np.take(g, np.arange(start, stop), axis=axis)
    core = take(p, p + n).copy()
    idx = [builtins.slice(None)] * g.ndim
    idx[axis] = builtins.slice(1, p + 1)
    core[tuple(idx)] += np.flip(take(0, p), axis=axis)
    idx[axis] = builtins.slice(n - 1 - p, n - 1)
    core[tuple(idx)] += np.flip(take(p + n, n + 2 * p), axis=axis)
    return core


def reflect_pad(x: Tensor, p: int) -> Tensor:
    """Mirror-pad the two spatial dims by ``p`` without repeating the edge sample."""
    x = as_tensor(x)
    _require_chw(x, "reflect_pad")
    if p == 0:
        return x
    if p < 0 or p >= x.shape[1] or p >= x.shape[2]:
        raise ValueError(f"reflect_pad: padding {p} unsupported for dims {x.dims}")
    out = np.pad(x.data, ((0, 0), (p, p), (p, p)), mode="reflect")
    return Tensor._result(out, (x,), lambda g: (_fold_reflection(_fold_reflection(g, p, 1), p, 2),), "reflect_pad")


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""
    x = as_tensor(x)
    _require_chw(x, "max_pool2d")
    c, h, w = x.shape
    ho, wo = h // size, w // size
    if ho == 0 or wo == 0:
        raise ShapeError(f"max_pool2d: window {size} larger than input dims {x.dims}")
    blocks = (x.data[:, :ho * size, :wo * size]
              .reshape(c, ho, size, wo, size).transpose(0, 1, 3, 2, 4).reshape(c, ho, wo, size * size))
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros((c, ho, wo, size * size), dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(x.data)
        gx[:, :ho * size, :wo * size] = (gb.reshape(c, ho, wo, size, size)
                                         .transpose(0, 1, 3, 2, 4).reshape(c, ho * size, wo * size))
        return (gx,)

    return Tensor._result(out, (x,), backward, "max_pool2d")


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Replicate every spatial sample into a ``factor x factor`` block."""
    x = as_tensor(x)
    _require_chw(x, "upsample_nearest")
    c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def backward(g):
        return (g.reshape(c, h, factor, w, factor).sum(axis=(2, 4)),)

    return Tensor._result(out, (x,), backward, "upsample_nearest")


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference over all elements."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mse: dims {a.dims} vs {b.dims}")
    return mean(square(sub(a, b)))
