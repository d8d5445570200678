"""Binary tensor container.

Layout, all little-endian::

    b"MOCT" | u32 version (=1) | u32 rank | u32 dim * rank | f32 data (row-major)

Feature maps are written with rank 3 and encoding matrices with rank 2.
Weights use rank 4 (conv kernels) and rank 1 (biases).
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"MOCT"
VERSION = 1
MAX_RANK = 8


class TensorFormatError(ValueError):
    pass


def encode(array) -> bytes:
    arr = np.asarray(array)
    if arr.ndim == 0 or arr.ndim > MAX_RANK:
        raise TensorFormatError(f"rank must be in 1..{MAX_RANK}, got {arr.ndim}")
    data = np.ascontiguousarray(arr, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise TensorFormatError("refusing to write non-finite values")
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + data.tobytes()


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise TensorFormatError("missing MOCT magic")
    version, rank = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise TensorFormatError(f"unsupported format version {version}")
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(f"bad rank {rank}")
    offset = 12 + 4 * rank
    if len(blob) < offset:
        raise TensorFormatError("truncated header")
    shape = struct.unpack_from(f"<{rank}I", blob, 12)
    count = int(np.prod(shape))
    if len(blob) != offset + 4 * count:
        raise TensorFormatError(f"payload is {len(blob) - offset} bytes, expected {4 * count} for shape {shape}")
    return np.frombuffer(blob, dtype="<f4", offset=offset).reshape(shape).astype(np.float32)


def save(path: str | os.PathLike, array) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(array))


def load(path: str | os.PathLike, rank: int | None = None) -> np.ndarray:
    with open(path, "rb") as fh:
        arr = decode(fh.read())
    if rank is not None and arr.ndim != rank:
        raise TensorFormatError(f"{path}: expected rank {rank}, got {arr.ndim}")
    return arr
