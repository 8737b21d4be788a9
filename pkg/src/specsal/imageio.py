"""Binary PGM (grayscale) and PPM (color) read/write.

Only the 8-bit binary variants (P5/P6, maxval 255) are supported; that covers
masks, saliency maps, pseudo-color renderings, and the stats heatmap without
pulling in an imaging dependency.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .exceptions import MaskFormatError


def write_bytes_atomic(path, payload: bytes) -> None:
    """Write to a temp file in the target directory, then rename into place."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_text_atomic(path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def _parse_netpbm(payload: bytes, magic: bytes, channels: int, path) -> np.ndarray:
    if not payload.startswith(magic):
        raise MaskFormatError(f"{path}: expected {magic.decode()} image")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(payload) and payload[pos : pos + 1].isspace():
            pos += 1
        if pos < len(payload) and payload[pos : pos + 1] == b"#":
            while pos < len(payload) and payload[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(payload) and not payload[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MaskFormatError(f"{path}: truncated header")
        try:
            fields.append(int(payload[start:pos]))
        except ValueError as exc:
            raise MaskFormatError(f"{path}: non-numeric header field") from exc
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise MaskFormatError(f"{path}: maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise MaskFormatError(f"{path}: bad dimensions {width}x{height}")
    need = width * height * channels
    data = payload[pos : pos + need]
    if len(data) < need:
        raise MaskFormatError(f"{path}: payload has {len(data)} bytes, needs {need}")
    arr = np.frombuffer(data, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width).copy()
    return arr.reshape(height, width, channels).copy()


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM as a (H, W) uint8 array."""
    return _parse_netpbm(Path(path).read_bytes(), b"P5", 1, path)


def write_pgm(values: np.ndarray, path) -> None:
    values = np.asarray(values)
    if values.ndim != 2 or values.dtype != np.uint8:
        raise ValueError(f"write_pgm needs a (H,W) uint8 array, got {values.shape} {values.dtype}")
    h, w = values.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    write_bytes_atomic(path, header + values.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary 8-bit PPM as a (H, W, 3) uint8 array."""
    return _parse_netpbm(Path(path).read_bytes(), b"P6", 3, path)


def write_ppm(values: np.ndarray, path) -> None:
    values = np.asarray(values)
    if values.ndim != 3 or values.shape[2] != 3 or values.dtype != np.uint8:
        raise ValueError(f"write_ppm needs a (H,W,3) uint8 array, got {values.shape} {values.dtype}")
    h, w, _ = values.shape
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    write_bytes_atomic(path, header + values.tobytes())


FLOAT_MAP_SUFFIX = ".f32"


def write_float_map(values: np.ndarray, path) -> None:
    """Raw float sidecar for exact evaluation: u32 H, u32 W, then H*W f32 LE."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"write_float_map needs a (H,W) array, got shape {values.shape}")
    h, w = values.shape
    header = np.array([h, w], dtype="<u4").tobytes()
    write_bytes_atomic(path, header + values.astype("<f4").tobytes())


def read_float_map(path) -> np.ndarray:
    payload = Path(path).read_bytes()
    if len(payload) < 8:
        raise MaskFormatError(f"{path}: truncated float map header")
    h, w = np.frombuffer(payload[:8], dtype="<u4")
    need = int(h) * int(w) * 4
    if len(payload) - 8 < need:
        raise MaskFormatError(f"{path}: float map payload too short")
    data = np.frombuffer(payload[8 : 8 + need], dtype="<f4")
    return data.reshape(int(h), int(w)).astype(np.float64)
