"""Headerless little-endian float32 series files."""
from __future__ import annotations

import hashlib
import os

import numpy as np

_DTYPE = np.dtype("<f4")


def read_series(path, n: int, count: int = 0, mmap: bool = False) -> np.ndarray:
    """Read ``count`` series of length ``n`` (``count=0`` infers it from the file size)."""
    if n < 1:
        raise ValueError("series length must be positive")
    size = os.path.getsize(path)
    row = n * _DTYPE.itemsize
    if count == 0:
        if size % row:
            raise ValueError(f"{path}: size {size} is not a multiple of {row} bytes (n={n})")
        count = size // row
    elif size != count * row:
        raise ValueError(f"{path}: size {size} != {count} x {n} x 4 bytes")
    if count == 0:
        raise ValueError(f"{path}: empty file")
    if mmap:
        return np.memmap(path, dtype=_DTYPE, mode="r", shape=(count, n))
    return np.fromfile(path, dtype=_DTYPE).reshape(count, n).astype(np.float32)


def write_series(path, values) -> None:
    v = np.asarray(values, dtype=_DTYPE)
    if v.ndim != 2:
        raise ValueError("expected a 2-d array")
    v.tofile(path)


def array_digest(values) -> bytes:
    """sha256 of an array's little-endian float32 bytes, in blocks."""
    v = np.asarray(values)
    h = hashlib.sha256()
    step = max(1, (1 << 24) // max(1, v[0].nbytes)) if v.ndim == 2 and len(v) else 1
    for s in range(0, len(v), step):
        h.update(np.ascontiguousarray(v[s:s + step], dtype=_DTYPE).tobytes())
    return h.digest()
