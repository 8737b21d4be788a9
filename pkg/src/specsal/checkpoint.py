"""Flat binary parameter checkpoints.

Layout (all little-endian): 4 magic bytes ``SSCK``, u32 record count, then per
record a u16 name length, the utf-8 name, a u8 rank, u32 dimensions, and the
values as 32-bit IEEE-754 floats in C order. Values are stored at single
precision; loading widens back to float64.
"""

from __future__ import annotations

import struct

import numpy as np

from .exceptions import CheckpointError
from .imageio import write_bytes_atomic

CHECKPOINT_MAGIC = b"SSCK"


def save_checkpoint(named_values, path) -> None:
    chunks = []
    count = 0
    for name, values in named_values:
        encoded = name.encode("utf-8")
        if not encoded or len(encoded) > 0xFFFF:
            raise CheckpointError(f"bad parameter name {name!r}")
        values = np.asarray(values)
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", values.ndim))
        chunks.append(struct.pack(f"<{values.ndim}I", *values.shape))
        chunks.append(np.ascontiguousarray(values, dtype="<f4").tobytes())
        count += 1
    payload = CHECKPOINT_MAGIC + struct.pack("<I", count) + b"".join(chunks)
    write_bytes_atomic(path, payload)


class _Reader:
    def __init__(self, payload: bytes, path):
        self.payload = payload
        self.path = path
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.payload):
            raise CheckpointError(
                f"{self.path}: truncated at byte {self.offset} (wanted {n} more)"
            )
        out = self.payload[self.offset : self.offset + n]
        self.offset += n
        return out


def load_checkpoint(path) -> dict:
    with open(path, "rb") as handle:
        payload = handle.read()
    reader = _Reader(payload, path)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (count,) = struct.unpack("<I", reader.take(4))
    state = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", reader.take(2))
        name = reader.take(name_len).decode("utf-8")
        if name in state:
            raise CheckpointError(f"{path}: duplicate parameter {name!r}")
        (rank,) = struct.unpack("<B", reader.take(1))
        shape = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        raw = reader.take(4 * size)
        state[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    if reader.offset != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - reader.offset} trailing bytes")
    return state


def model_state(model):
    """(name, values) pairs for every parameter, in declaration order."""
    return [(name, p.value.data) for name, p in model.named_parameters()]


def apply_state(model, state: dict) -> None:
    """Load a checkpoint dict into a model; names and shapes must match 1:1."""
    params = dict(model.named_parameters())
    missing = sorted(set(params) - set(state))
    extra = sorted(set(state) - set(params))
    if missing or extra:
        raise CheckpointError(
            f"checkpoint/model mismatch: missing {missing[:3]}, unexpected {extra[:3]}"
        )
    for name, p in params.items():
        values = state[name]
        if tuple(values.shape) != tuple(p.value.data.shape):
            raise CheckpointError(
                f"parameter {name}: checkpoint shape {values.shape} "
                f"!= model shape {p.value.data.shape}"
            )
    for name, p in params.items():
        p.value.data[...] = state[name]
