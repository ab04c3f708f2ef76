"""Parser for the IDX container used by the MNIST distribution."""

from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, DimensionOverflowError, TruncatedError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
_NDIM = {IMAGES_MAGIC: 3, LABELS_MAGIC: 1}
# refuse headers that would describe more than 2 GiB of payload
MAX_PAYLOAD = 1 << 31


def parse_idx(buf: bytes) -> np.ndarray:
    """Decode an unsigned-byte IDX image (N, H, W) or label (N,) file."""
    if len(buf) < 4:
        raise TruncatedError("IDX magic truncated", expected=4, actual=len(buf))
    (magic,) = struct.unpack(">I", buf[:4])
    if magic not in _NDIM:
        raise BadMagicError(f"unknown IDX magic 0x{magic:08x}")
    ndim = _NDIM[magic]
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise TruncatedError("IDX dimension header truncated", expected=header, actual=len(buf))
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    count = 1
    for d in dims:
        count *= d
        if count > MAX_PAYLOAD:
            raise DimensionOverflowError(f"IDX dimensions {dims} exceed the {MAX_PAYLOAD}-byte payload limit")
    need = header + count
    if len(buf) < need:
        raise TruncatedError(f"IDX payload truncated: expected {need} bytes, got {len(buf)}", need, len(buf))
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=header).reshape(dims).copy()


def load_idx(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


def idx_bytes(array: np.ndarray) -> bytes:
    """Encode a u8 array of rank 1 or 3 as IDX (used to build fixtures)."""
    arr = np.asarray(array, dtype=np.uint8)
    magic = {1: LABELS_MAGIC, 3: IMAGES_MAGIC}.get(arr.ndim)
    if magic is None:
        raise ValueError("IDX export supports rank-1 labels or rank-3 images")
    return struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes()
