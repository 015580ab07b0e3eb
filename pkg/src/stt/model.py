"""Encoder / transfer / decoder network.

Parameters live in a flat ``dict[str, Tensor]``.  Content and style images go
through the same encoder (same parameter names), and the transfer stack
attends from content tokens to one fixed set of encoded style tokens.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .autodiff import ShapeError, Tensor, get_default_dtype, no_grad, ops
from .embedding import (
    PATCH,
    PATCH_DIM,
    PE_MODES,
    PE_TABLE_LEN,
    TokenSeq,
    apply_pe,
    as_image_tensor,
    check_pe_mode,
    conv_pe,
    patch_embed,
    tokens_to_chw,
)

Params = Mapping[str, Tensor]

DECODER_STAGES = 3
LN_EPS = 1e-5


@dataclass
class ModelConfig:
    embed_dim: int = 64
    enc_layers: int = 3
    transfer_layers: int = 3
    heads: int = 4
    mlp_ratio: int = 4
    patch: int = PATCH
    pe_mode: str = "conv"

    def __post_init__(self):
        if self.patch != PATCH:
            raise ValueError(f"patch size is fixed at {PATCH}, got {self.patch}")
        if self.embed_dim <= 0 or self.heads <= 0 or self.embed_dim % self.heads:
            raise ValueError(f"embed_dim {self.embed_dim} must be a positive multiple of heads {self.heads}")
        if self.embed_dim % 8:
            raise ValueError(f"embed_dim {self.embed_dim} must be divisible by 8 for the decoder schedule")
        if self.enc_layers < 0 or self.transfer_layers < 0 or self.mlp_ratio < 1:
            raise ValueError("layer counts must be >= 0 and mlp_ratio >= 1")
        check_pe_mode(self.pe_mode)

    @property
    def pe_hidden(self) -> int:
        return self.embed_dim // 2

    def to_dict(self) -> dict:
        return asdict(self)


# -- parameter layout -----------------------------------------------------------


def _attention_shapes(prefix: str, c: int) -> dict[str, tuple[int, ...]]:
    return {
        f"{prefix}.wq": (c, c),
        f"{prefix}.wk": (c, c),
        f"{prefix}.wv": (c, c),
        f"{prefix}.wo": (c, c),
        f"{prefix}.bo": (c,),
    }


def _ln_shapes(prefix: str, c: int) -> dict[str, tuple[int, ...]]:
    return {f"{prefix}.gamma": (c,), f"{prefix}.beta": (c,)}


def _mlp_shapes(prefix: str, c: int, hidden: int) -> dict[str, tuple[int, ...]]:
    return {f"{prefix}.w1": (c, hidden), f"{prefix}.b1": (hidden,), f"{prefix}.w2": (hidden, c), f"{prefix}.b2": (c,)}


def decoder_widths(c: int) -> list[int]:
    return [c // 2 ** s for s in range(DECODER_STAGES + 1)]


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter name of the architecture with its dims, in a fixed order."""
    c, hidden, d = config.embed_dim, config.embed_dim * config.mlp_ratio, config.pe_hidden
    shapes: dict[str, tuple[int, ...]] = {"patch.proj": (PATCH_DIM, c), "patch.bias": (c,)}
    if config.pe_mode == "conv":
        shapes.update({
            "pe.conv1.weight": (d, 3, 3, 3), "pe.conv1.bias": (d,),
            "pe.conv2.weight": (d, d, 3, 3), "pe.conv2.bias": (d,),
            "pe.conv3.weight": (c, d, PATCH, PATCH), "pe.conv3.bias": (c,),
        })
    elif config.pe_mode == "parametric":
        shapes["pe.table"] = (PE_TABLE_LEN, c)
    for l in range(config.enc_layers):
        p = f"enc.{l}"
        shapes.update(_ln_shapes(f"{p}.ln1", c))
        shapes.update(_attention_shapes(f"{p}.attn", c))
        shapes.update(_ln_shapes(f"{p}.ln2", c))
        shapes.update(_mlp_shapes(f"{p}.mlp", c, hidden))
    for l in range(config.transfer_layers):
        p = f"dec.{l}"
        shapes.update(_ln_shapes(f"{p}.ln1", c))
        shapes.update(_attention_shapes(f"{p}.self_attn", c))
        shapes.update(_ln_shapes(f"{p}.ln2", c))
        shapes.update(_attention_shapes(f"{p}.cross_attn", c))
        shapes.update(_ln_shapes(f"{p}.ln3", c))
        shapes.update(_mlp_shapes(f"{p}.mlp", c, hidden))
    widths = decoder_widths(c)
    for s in range(DECODER_STAGES):
        shapes[f"up.{s}.weight"] = (widths[s + 1], widths[s], 3, 3)
        shapes[f"up.{s}.bias"] = (widths[s + 1],)
    shapes["out.weight"] = (3, widths[-1], 3, 3)
    shapes["out.bias"] = (3,)
    return shapes


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    values = rng.standard_normal(shape)
    bad = np.abs(values) > 2.0
    while bad.any():
        values[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(values) > 2.0
    return values * std


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, Tensor]:
    """Truncated normal (0.02) for token projections, He normal for convs,
    zeros for biases, ones/zeros for LayerNorm."""
    rng = np.random.default_rng(seed)
    dtype = get_default_dtype()
    params = {}
    for name, shape in param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            value = np.ones(shape)
        elif leaf in ("beta", "bias", "bo", "b1", "b2"):
            value = np.zeros(shape)
        elif leaf == "weight":
            fan_in = int(np.prod(shape[1:]))
            value = rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)
        else:
            value = _trunc_normal(rng, shape, 0.02)
        params[name] = Tensor(value, requires_grad=True, name=name, dtype=dtype)
    return params


def check_params(params: Params, config: ModelConfig) -> None:
    expected = param_shapes(config)
    missing = sorted(set(expected) - set(params))
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise ValueError(f"parameter names do not match the architecture (missing {missing}, unexpected {extra})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeError(f"parameter {name}: dims {params[name].dims}, expected {list(shape)}")


# -- transformer blocks -----------------------------------------------------------


def _ln(x: Tensor, params: Params, prefix: str) -> Tensor:
    return ops.layer_norm(x, params[f"{prefix}.gamma"], params[f"{prefix}.beta"], LN_EPS)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    length, c = x.shape
    return ops.transpose(ops.reshape(x, (length, heads, c // heads)), (1, 0, 2))


def attention(queries: Tensor, keys_values: Tensor, params: Params, prefix: str, heads: int) -> Tensor:
    """Multi-head scaled dot-product attention followed by the output projection.

    Queries come from ``queries``; keys and values are both projected from
    ``keys_values`` (pass the same tensor twice for self-attention).
    """
    if queries.shape[1] != keys_values.shape[1]:
        raise ShapeError(f"attention: query width {queries.shape[1]} vs key/value width {keys_values.shape[1]}")
    length, c = queries.shape
    q = _split_heads(ops.matmul(queries, params[f"{prefix}.wq"]), heads)
    k = _split_heads(ops.matmul(keys_values, params[f"{prefix}.wk"]), heads)
    v = _split_heads(ops.matmul(keys_values, params[f"{prefix}.wv"]), heads)
    scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(c // heads))
    mixed = ops.matmul(ops.softmax(scores), v)
    merged = ops.reshape(ops.transpose(mixed, (1, 0, 2)), (length, c))
    return ops.linear(merged, params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def _mlp(x: Tensor, params: Params, prefix: str) -> Tensor:
    return ops.mlp_forward(x, params[f"{prefix}.w1"], params[f"{prefix}.b1"],
                           params[f"{prefix}.w2"], params[f"{prefix}.b2"])


def encoder_layer(c_prev: TokenSeq, params: Params, prefix: str, heads: int) -> TokenSeq:
    """Pre-norm self-attention block followed by a pre-norm MLP block."""
    x = c_prev.tokens
    normed = _ln(x, params, f"{prefix}.ln1")
    x = ops.add(attention(normed, normed, params, f"{prefix}.attn", heads), x)
    x = ops.add(_mlp(_ln(x, params, f"{prefix}.ln2"), params, f"{prefix}.mlp"), x)
    return c_prev.with_tokens(x)


def transfer_layer(x_prev: TokenSeq, style: TokenSeq, params: Params, prefix: str, heads: int) -> TokenSeq:
    """Self-attention, then cross-attention onto raw (un-normalised) style tokens, then MLP."""
    if x_prev.width != style.width:
        raise ShapeError(f"content width {x_prev.width} vs style width {style.width}")
    x = x_prev.tokens
    normed = _ln(x, params, f"{prefix}.ln1")
    x = ops.add(attention(normed, normed, params, f"{prefix}.self_attn", heads), x)
    x = ops.add(attention(_ln(x, params, f"{prefix}.ln2"), style.tokens, params, f"{prefix}.cross_attn", heads), x)
    x = ops.add(_mlp(_ln(x, params, f"{prefix}.ln3"), params, f"{prefix}.mlp"), x)
    return x_prev.with_tokens(x)


# -- full network -----------------------------------------------------------------


def embed(img, params: Params, config: ModelConfig) -> TokenSeq:
    tokens = patch_embed(img, params["patch.proj"], params["patch.bias"])
    if config.pe_mode == "conv":
        return apply_pe(tokens, "conv", conv_pe(img, params))
    if config.pe_mode == "parametric":
        return apply_pe(tokens, "parametric", params["pe.table"])
    return tokens


def encode(img, params: Params, config: ModelConfig) -> TokenSeq:
    seq = embed(img, params, config)
    if seq.width != config.embed_dim:
        raise ShapeError(f"token width {seq.width} vs embed_dim {config.embed_dim}")
    for l in range(config.enc_layers):
        seq = encoder_layer(seq, params, f"enc.{l}", config.heads)
    return seq


def transfer(f_c: TokenSeq, f_s: TokenSeq, params: Params, config: ModelConfig) -> TokenSeq:
    x = f_c
    for l in range(config.transfer_layers):
        x = transfer_layer(x, f_s, params, f"dec.{l}", config.heads)
    return x


def decode(f_cs: TokenSeq, params: Params) -> Tensor:
    """Token grid -> ``(H, W, 3)`` image through three x2 upsample/conv stages."""
    x = tokens_to_chw(f_cs)
    for s in range(DECODER_STAGES):
        x = ops.upsample_nearest(x, 2)
        x = ops.conv2d(ops.reflect_pad(x, 1), params[f"up.{s}.weight"], 1, params[f"up.{s}.bias"])
        x = ops.relu(x)
    x = ops.conv2d(ops.reflect_pad(x, 1), params["out.weight"], 1, params["out.bias"])
    return ops.transpose(x, (1, 2, 0))


def stylize(content, style, params: Params, config: ModelConfig) -> Tensor:
    """Render ``content`` in the manner of ``style``; output is unclamped."""
    return decode(transfer(encode(content, params, config), encode(style, params, config), params, config), params)


def stylize_array(content: np.ndarray, style: np.ndarray, params: Params, config: ModelConfig) -> np.ndarray:
    """Inference convenience: numpy in, numpy out, no graph recorded."""
    with no_grad():
        return stylize(as_image_tensor(content), as_image_tensor(style), params, config).data


__all__ = [
    "ModelConfig",
    "PE_MODES",
    "attention",
    "check_params",
    "decode",
    "encode",
    "encoder_layer",
    "init_params",
    "param_shapes",
    "stylize",
    "stylize_array",
    "transfer",
    "transfer_layer",
]
