"""Minimal binary tensor container ("TNSR") with bit-exact round trips.

Layout, all integers little-endian:

    offset 0   magic   4 bytes  b"TNSR"
    offset 4   version u32      currently 1
    offset 8   dtype   u32      1 = f32, 2 = f64
    offset 12  rank    u32      0..4
    offset 16  dims    rank x u64
    then       payload row-major values, little-endian

No compression, no streaming: a tensor file is a single read or write.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DomainError, TensorFormatError

MAGIC = b"TNSR"
VERSION = 1
MAX_RANK = 4

_DTYPE_CODE = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
_CODE_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}

_OFF_MAGIC = 0
_OFF_VERSION = 4
_OFF_DTYPE = 8
_OFF_RANK = 12
_OFF_DIMS = 16


def tensor_write(path, array) -> None:
    """Write an array (rank <= 4, finite, f32/f64) to `path`."""
    arr = np.asarray(array)
    if arr.ndim > MAX_RANK:
        raise DomainError(f"rank {arr.ndim} exceeds maximum {MAX_RANK}")
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise DomainError("refusing to write non-finite values")
    arr = np.asarray(arr, order="C")  # ascontiguousarray would promote rank 0 to 1
    le = arr.dtype.newbyteorder("<")
    header = MAGIC + struct.pack(
        "<III", VERSION, _DTYPE_CODE[np.dtype(le)], arr.ndim
    )
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    Path(path).write_bytes(header + arr.astype(le, copy=False).tobytes())


def tensor_read(path) -> np.ndarray:
    """Read a tensor file back, bit-exactly. Raises TensorFormatError on damage."""
    raw = Path(path).read_bytes()
    if len(raw) < _OFF_DIMS:
        raise TensorFormatError("file shorter than fixed header", len(raw))
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"bad magic {raw[:4]!r}", _OFF_MAGIC)
    version, dtype_code, rank = struct.unpack_from("<III", raw, _OFF_VERSION)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}", _OFF_VERSION)
    if dtype_code not in _CODE_DTYPE:
        raise TensorFormatError(f"unknown dtype code {dtype_code}", _OFF_DTYPE)
    if rank > MAX_RANK:
        raise TensorFormatError(f"rank {rank} exceeds maximum {MAX_RANK}", _OFF_RANK)
    dims_end = _OFF_DIMS + 8 * rank
    if len(raw) < dims_end:
        raise TensorFormatError("truncated dims", _OFF_DIMS)
    dims = struct.unpack_from(f"<{rank}Q", raw, _OFF_DIMS) if rank else ()
    dtype = _CODE_DTYPE[dtype_code]
    count = 1
    for d in dims:
        count *= d
    expected = dims_end + count * dtype.itemsize
    if len(raw) != expected:
        raise TensorFormatError(
            f"payload length {len(raw) - dims_end} != {count} x {dtype.itemsize}",
            dims_end,
        )
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=dims_end)
    return data.reshape(dims).copy()
