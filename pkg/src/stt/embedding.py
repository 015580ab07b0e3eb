"""Patch tokens and positional encodings.

Each ``8 x 8 x 3`` patch is flattened in (row, col, channel) row-major order,
i.e. element ``(r, c, ch)`` lands at index ``(r * 8 + c) * 3 + ch``.  Tokens are
ordered row-major over the patch grid.  The decoder undoes the grid ordering
when it reshapes tokens back to a feature map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Mapping

import numpy as np

from .autodiff import ShapeError, Tensor, as_tensor, ops

PATCH = 8
PATCH_DIM = PATCH * PATCH * 3
PE_TABLE_LEN = 64 * 64
PE_MODES = ("none", "parametric", "conv")

PEMode = Literal["none", "parametric", "conv"]


@dataclass
class TokenSeq:
    """``L x C`` token matrix laid out over a ``grid_h x grid_w`` patch grid."""

    tokens: Tensor
    grid_h: int
    grid_w: int

    def __post_init__(self):
        if self.tokens.ndim != 2 or self.tokens.shape[0] != self.grid_h * self.grid_w:
            raise ShapeError(
                f"token dims {self.tokens.dims} do not match a {self.grid_h}x{self.grid_w} grid"
            )

    @property
    def length(self) -> int:
        return self.tokens.shape[0]

    @property
    def width(self) -> int:
        return self.tokens.shape[1]

    def with_tokens(self, tokens: Tensor) -> "TokenSeq":
        return TokenSeq(tokens, self.grid_h, self.grid_w)


def check_pe_mode(mode: str) -> str:
    if mode not in PE_MODES:
        raise ValueError(f"unknown pe mode {mode!r}; expected one of {PE_MODES}")
    return mode


def as_image_tensor(img) -> Tensor:
    """Accept an ``(H, W, 3)`` ndarray or Tensor and validate the patch constraint."""
    img = as_tensor(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an (H, W, 3) image, got dims {img.dims}")
    h, w, _ = img.shape
    if h % PATCH:
        raise ShapeError(f"image height {h} is not a multiple of {PATCH}")
    if w % PATCH:
        raise ShapeError(f"image width {w} is not a multiple of {PATCH}")
    return img


def patchify(img) -> Tensor:
    """``(H, W, 3)`` -> ``(L, 192)`` flattened patches."""
    img = as_image_tensor(img)
    h, w, _ = img.shape
    gh, gw = h // PATCH, w // PATCH
    grid = ops.reshape(img, (gh, PATCH, gw, PATCH, 3))
    grid = ops.transpose(grid, (0, 2, 1, 3, 4))
    return ops.reshape(grid, (gh * gw, PATCH_DIM))


def patch_embed(img, proj: Tensor, bias: Tensor) -> TokenSeq:
    """Split into non-overlapping 8x8 patches and project each to C dims."""
    img = as_image_tensor(img)
    if proj.shape[0] != PATCH_DIM:
        raise ShapeError(f"patch projection dims {proj.dims}; first dim must be {PATCH_DIM}")
    h, w, _ = img.shape
    tokens = ops.linear(patchify(img), proj, bias)
    return TokenSeq(tokens, h // PATCH, w // PATCH)


def chw_to_tokens(fmap: Tensor) -> TokenSeq:
    c, gh, gw = fmap.shape
    return TokenSeq(ops.reshape(ops.transpose(fmap, (1, 2, 0)), (gh * gw, c)), gh, gw)


def tokens_to_chw(seq: TokenSeq) -> Tensor:
    grid = ops.reshape(seq.tokens, (seq.grid_h, seq.grid_w, seq.width))
    return ops.transpose(grid, (2, 0, 1))


def conv_pe(img, params: Mapping[str, Tensor], prefix: str = "pe") -> TokenSeq:
    """Content-aware positional encoding on the token grid.

    pad -> conv3x3 -> ReLU -> pad -> conv3x3 -> conv8x8/stride 8.
    """
    img = as_image_tensor(img)
    x = ops.transpose(img, (2, 0, 1))
    x = ops.conv2d(ops.reflect_pad(x, 1), params[f"{prefix}.conv1.weight"], 1, params[f"{prefix}.conv1.bias"])
    x = ops.relu(x)
    x = ops.conv2d(ops.reflect_pad(x, 1), params[f"{prefix}.conv2.weight"], 1, params[f"{prefix}.conv2.bias"])
    x = ops.conv2d(x, params[f"{prefix}.conv3.weight"], PATCH, params[f"{prefix}.conv3.bias"])
    return chw_to_tokens(x)


def apply_pe(tokens: TokenSeq, mode: str, pe_source=None) -> TokenSeq:
    """Add the positional encoding selected by ``mode``.

    ``pe_source`` is ignored for ``"none"``, is the ``(L_max, C)`` learned table
    for ``"parametric"`` (its first L rows are used) and the Conv PE
    :class:`TokenSeq` for ``"conv"``.
    """
    check_pe_mode(mode)
    if mode == "none":
        return tokens
    if mode == "parametric":
        table = as_tensor(pe_source)
        if table.shape[0] < tokens.length:
            raise ValueError(f"positional table has {table.shape[0]} rows, need {tokens.length}")
        if table.shape[1] != tokens.width:
            raise ShapeError(f"positional table width {table.shape[1]} vs token width {tokens.width}")
        pe = table if table.shape[0] == tokens.length else ops.getitem(table, np.s_[: tokens.length])
        return tokens.with_tokens(ops.add(tokens.tokens, pe))
    pe = pe_source.tokens if isinstance(pe_source, TokenSeq) else as_tensor(pe_source)
    if pe.shape != tokens.tokens.shape:
        raise ShapeError(f"positional encoding dims {pe.dims} vs token dims {tokens.tokens.dims}")
    return tokens.with_tokens(ops.add(tokens.tokens, pe))
