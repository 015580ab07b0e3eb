"""Model + optimizer checkpoints on top of the STTW container.

Besides the model parameters a checkpoint holds ``meta.config`` (the
architecture, so inference needs no separate config) and, optionally, the
optimizer state as ``adam.t``, ``adam.m.<param>`` and ``adam.v.<param>``.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .autodiff import Tensor, get_default_dtype
from .embedding import PE_MODES
from .model import ModelConfig, param_shapes
from .optim import AdamState
from .sttw import CheckpointError, decode_tensors, encode_tensors, read_tensors, write_tensors

META_KEY = "meta.config"
META_FIELDS = ("embed_dim", "enc_layers", "transfer_layers", "heads", "mlp_ratio", "patch", "pe_mode")


def config_to_vector(config: ModelConfig) -> np.ndarray:
    values = [getattr(config, f) for f in META_FIELDS[:-1]] + [PE_MODES.index(config.pe_mode)]
    return np.array(values, dtype=np.float32)


def config_from_vector(vec: np.ndarray) -> ModelConfig:
    ints = [int(round(float(x))) for x in np.asarray(vec).reshape(-1)]
    if len(ints) != len(META_FIELDS) or not 0 <= ints[-1] < len(PE_MODES):
        raise ValueError(f"malformed {META_KEY} entry {ints}")
    kwargs = dict(zip(META_FIELDS[:-1], ints[:-1]))
    return ModelConfig(**kwargs, pe_mode=PE_MODES[ints[-1]])


def checkpoint_tensors(params: Mapping[str, Tensor], state: AdamState | None, config: ModelConfig) -> dict[str, np.ndarray]:
    out = {META_KEY: config_to_vector(config)}
    names = list(param_shapes(config))
    for name in names:
        out[name] = params[name].data
    if state is not None:
        out["adam.t"] = np.array(state.t, dtype=np.float32)
        for name in names:
            out[f"adam.m.{name}"] = state.m[name]
        for name in names:
            out[f"adam.v.{name}"] = state.v[name]
    return out


def save_checkpoint(params: Mapping[str, Tensor], state: AdamState | None, path, config: ModelConfig) -> None:
    write_tensors(path, checkpoint_tensors(params, state, config))


def checkpoint_bytes(params, state, config) -> bytes:
    return encode_tensors(checkpoint_tensors(params, state, config))


def restore(tensors: Mapping[str, np.ndarray], path, config: ModelConfig | None = None
            ) -> tuple[dict[str, Tensor], AdamState, ModelConfig]:
    """Validate a decoded tensor set against the architecture and build live objects."""
    if META_KEY in tensors:
        try:
            stored = config_from_vector(tensors[META_KEY])
        except ValueError as exc:
            raise CheckpointError(path, str(exc), tensor=META_KEY) from exc
        if config is not None and config_to_vector(config).tolist() != config_to_vector(stored).tolist():
            raise CheckpointError(path, f"architecture mismatch: checkpoint has {stored}, expected {config}")
        config = stored
    elif config is None:
        raise CheckpointError(path, f"no {META_KEY} entry and no model config supplied")

    shapes = param_shapes(config)
    allowed = {META_KEY, "adam.t"} | set(shapes)
    allowed |= {f"adam.m.{n}" for n in shapes} | {f"adam.v.{n}" for n in shapes}
    unknown = sorted(set(tensors) - allowed)
    if unknown:
        raise CheckpointError(path, f"unknown tensor name {unknown[0]!r}", tensor=unknown[0])
    for name, shape in shapes.items():
        if name not in tensors:
            raise CheckpointError(path, "missing parameter", tensor=name)
        if tensors[name].shape != shape:
            raise CheckpointError(path, f"dims {list(tensors[name].shape)} do not match expected {list(shape)}", tensor=name)

    adam_names = [n for n in tensors if n.startswith("adam.")]
    if adam_names:
        expected_adam = len(shapes) * 2 + 1
        if len(adam_names) != expected_adam:
            raise CheckpointError(path, f"incomplete optimizer state ({len(adam_names)} of {expected_adam} tensors)")
        for prefix in ("adam.m.", "adam.v."):
            for name, shape in shapes.items():
                if tensors[prefix + name].shape != shape:
                    raise CheckpointError(path, "optimizer moment dims do not match parameter", tensor=prefix + name)
        t = float(tensors["adam.t"].reshape(-1)[0]) if tensors["adam.t"].size == 1 else -1.0
        if t < 0 or t != int(t):
            raise CheckpointError(path, "optimizer step count is not a non-negative integer", tensor="adam.t")

    dtype = get_default_dtype()
    params = {name: Tensor(tensors[name], requires_grad=True, name=name, dtype=dtype) for name in shapes}
    if adam_names:
        state = AdamState(t=int(tensors["adam.t"].reshape(-1)[0]))
        for name in shapes:
            state.m[name] = tensors[f"adam.m.{name}"].astype(dtype)
            state.v[name] = tensors[f"adam.v.{name}"].astype(dtype)
    else:
        state = AdamState.fresh(params)
    return params, state, config


def load_checkpoint(path, config: ModelConfig | None = None) -> tuple[dict[str, Tensor], AdamState, ModelConfig]:
    """Read and validate a checkpoint; nothing is returned unless the whole file is sound.

    A file without ``adam.*`` tensors yields a fresh optimizer state.
    """
    return restore(read_tensors(path), path, config)


def loads_checkpoint(raw: bytes, config: ModelConfig | None = None):
    return restore(decode_tensors(raw), "<bytes>", config)
