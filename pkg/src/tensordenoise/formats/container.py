"""TNSR tensor container.

Layout, all little-endian:

    offset 0   magic  b"TNSR"
    offset 4   u32    version (1)
    offset 8   u8     dtype code (1 = float32, 2 = float64)
    offset 9   u8     ndim (>= 1)
    offset 10  u64 x ndim dims
    then       row-major payload
"""

from __future__ import annotations

import logging
import struct
from math import prod
from pathlib import Path
from typing import Final, Literal

import numpy as np
from numpy.typing import ArrayLike

from ..errors import FormatError
from ..tensors.core import DenseTensor, as_tensor

logger = logging.getLogger("tensordenoise.io")

MAGIC: Final = b"TNSR"
VERSION: Final = 1
DTYPES: Final = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES: Final = {"float32": 1, "float64": 2}
_FIXED_HEADER: Final = struct.Struct("<4sIBB")


def encode_tensor(t: ArrayLike, dtype: Literal["float32", "float64"] = "float64") -> bytes:
    arr = as_tensor(t)
    code = _CODES[dtype]
    if arr.ndim > 255:
        raise FormatError(f"cannot store {arr.ndim} axes in a u8 ndim field")
    header = _FIXED_HEADER.pack(MAGIC, VERSION, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + dims + arr.astype(DTYPES[code]).tobytes(order="C")


def decode_tensor(buf: bytes) -> DenseTensor:
    if len(buf) < _FIXED_HEADER.size:
        raise FormatError("truncated header", offset=len(buf))
    magic, version, code, ndim = _FIXED_HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if code not in DTYPES:
        raise FormatError(f"unknown dtype code {code}", offset=8)
    if ndim == 0:
        raise FormatError("empty shape is not allowed", offset=9)

    dims_end = _FIXED_HEADER.size + 8 * ndim
    if len(buf) < dims_end:
        raise FormatError("truncated dims", offset=len(buf))
    dims = struct.unpack_from(f"<{ndim}Q", buf, _FIXED_HEADER.size)
    for i, d in enumerate(dims):
        if d == 0:
            raise FormatError(f"dimension {i} is zero", offset=_FIXED_HEADER.size + 8 * i)

    dtype = DTYPES[code]
    expected = prod(dims) * dtype.itemsize
    payload = len(buf) - dims_end
    if payload < expected:
        raise FormatError(f"truncated payload: {payload} of {expected} bytes", offset=len(buf))
    if payload > expected:
        raise FormatError(
            f"{payload - expected} trailing bytes after payload", offset=dims_end + expected
        )
    data = np.frombuffer(buf, dtype=dtype, count=prod(dims), offset=dims_end)
    return data.astype(np.float64).reshape(dims)


def write_tensor(
    path: str | Path,
    t: ArrayLike,
    dtype: Literal["float32", "float64"] = "float64",
) -> None:
    path = Path(path)
    blob = encode_tensor(t, dtype)
    path.write_bytes(blob)
    logger.debug("wrote %s (%d bytes, %s)", path, len(blob), dtype)


def read_tensor(path: str | Path) -> DenseTensor:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such tensor file: {path}")
    try:
        return decode_tensor(path.read_bytes())
    except FormatError as e:
        err = FormatError(f"{path}: {e}")
        err.offset = e.offset
        raise err from e
