"""STTW named-tensor container.

Layout (little-endian throughout)::

    b"STTW"  u32 version (=1)  u32 tensor_count
    per tensor:
        u16 name_len, name (UTF-8), u8 rank, rank x u32 dims, float32 payload
"""

from __future__ import annotations

import math
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .imageio import atomic_write

MAGIC = b"STTW"
VERSION = 1


class CheckpointError(ValueError):
    """Structured failure while reading a weight file."""

    def __init__(self, path, reason: str, offset: int | None = None, tensor: str | None = None):
        where = f" at byte {offset}" if offset is not None else ""
        which = f" (tensor {tensor!r})" if tensor else ""
        super().__init__(f"{path}: {reason}{where}{which}")
        self.path = str(path)
        self.reason = reason
        self.offset = offset
        self.tensor = tensor


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        raw_name = name.encode("utf-8")
        arr = np.asarray(value, dtype="<f4", order="C")  # ascontiguousarray would turn rank 0 into rank 1
        if len(raw_name) > 0xFFFF or arr.ndim > 0xFF:
            raise ValueError(f"tensor {name!r} cannot be represented in STTW")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def write_tensors(path, tensors: Mapping[str, np.ndarray]) -> None:
    atomic_write(path, encode_tensors(tensors))


def decode_tensors(raw: bytes, path="<bytes>") -> dict[str, np.ndarray]:
    """Parse a whole file; any inconsistency raises before anything is returned."""
    pos = 0

    def take(n: int, what: str, tensor: str | None = None) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(path, f"truncated while reading {what}", pos, tensor)
        out = raw[pos:pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise CheckpointError(path, "bad magic (not an STTW file)", 0)
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(path, f"unsupported version {version}", 4)
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(path, "tensor name is not valid UTF-8", pos - name_len) from None
        if name in tensors:
            raise CheckpointError(path, "duplicate tensor name", pos - name_len, name)
        (rank,) = struct.unpack("<B", take(1, "rank", name))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims", name))
        size = math.prod(dims)
        payload = take(4 * size, "payload", name)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(raw):
        raise CheckpointError(path, f"{len(raw) - pos} trailing bytes after last tensor", pos)
    return tensors


def read_tensors(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(path, exc.strerror or str(exc)) from exc
    return decode_tensors(raw, path)
