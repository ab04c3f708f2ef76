"""Binary raster files (SPK1 speckle, PHO1 phase) and 16-bit PGM exports."""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, FormatError, TruncatedError
from ..nn.checkpoint import write_atomic
from ..optics import RAW_PITCH_INDEX, PhaseObject, SpecklePattern

SPECKLE_MAGIC = b"SPK1"
PHASE_MAGIC = b"PHO1"
_HEADER = struct.Struct("<4sIIfi")
_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def raster_bytes(data: np.ndarray, pitch_um: float, pitch_index: int, magic: bytes = SPECKLE_MAGIC) -> bytes:
    arr = np.asarray(data)
    if arr.ndim != 2:
        raise ValueError(f"raster must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    return _HEADER.pack(magic, w, h, float(pitch_um), int(pitch_index)) + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def parse_raster(buf: bytes, expect: bytes | None = None) -> tuple[np.ndarray, float, int, bytes]:
    """Return ``(data, pitch_um, pitch_index, magic)``; data is float32."""
    if len(buf) < _HEADER.size:
        raise TruncatedError("raster header truncated", expected=_HEADER.size, actual=len(buf))
    magic, w, h, pitch, index = _HEADER.unpack_from(buf)
    if magic not in (SPECKLE_MAGIC, PHASE_MAGIC) or (expect is not None and magic != expect):
        raise BadMagicError(f"unexpected raster magic {magic!r}")
    need = _HEADER.size + 4 * w * h
    if len(buf) < need:
        raise TruncatedError(f"raster payload truncated: expected {need} bytes, got {len(buf)}", need, len(buf))
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after raster payload")
    data = np.frombuffer(buf, dtype="<f4", count=w * h, offset=_HEADER.size).astype(np.float32).reshape(h, w)
    return data, float(pitch), int(index), magic


def write_raster(path, data, pitch_um: float, pitch_index: int, magic: bytes = SPECKLE_MAGIC) -> Path:
    path = Path(path)
    write_atomic(path, raster_bytes(data, pitch_um, pitch_index, magic))
    return path


def read_raster(path, expect: bytes | None = None) -> tuple[np.ndarray, float, int, bytes]:
    return parse_raster(Path(path).read_bytes(), expect)


def save_pattern(path, pattern: SpecklePattern) -> Path:
    return write_raster(path, pattern.intensity, pattern.pixel_pitch_um, pattern.pitch_index)


def load_pattern(path) -> SpecklePattern:
    data, pitch, index, _ = read_raster(path, SPECKLE_MAGIC)
    return SpecklePattern(data, pitch, index)


def save_phase(path, obj: PhaseObject, pitch_um: float = 0.0) -> Path:
    return write_raster(path, obj.phase, pitch_um, RAW_PITCH_INDEX, PHASE_MAGIC)


def load_phase(path, label: int | None = None) -> PhaseObject:
    data, _, _, _ = read_raster(path, PHASE_MAGIC)
    # float32 storage can round pi up by one ulp
    return PhaseObject(np.clip(data.astype(np.float64), 0.0, np.pi), label)


def pgm_bytes(raster) -> bytes:
    """Binary 16-bit PGM, min-max scaled to 0..65535 (a flat raster maps to 0)."""
    x = np.asarray(raster, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("PGM export needs a 2-D raster")
    lo, hi = float(x.min()), float(x.max())
    scaled = np.zeros(x.shape) if hi <= lo else (x - lo) / (hi - lo)
    pix = np.rint(scaled * 65535).astype(">u2")
    h, w = x.shape
    return f"P5\n{w} {h}\n65535\n".encode("ascii") + pix.tobytes()


def write_pgm(path, raster) -> Path:
    path = Path(path)
    write_atomic(path, pgm_bytes(raster))
    return path


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    # exactly one whitespace byte separates maxval from the payload
    m = _PGM_HEADER.match(buf)
    if m is None:
        raise BadMagicError("not a binary PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    dtype = ">u2" if maxval > 255 else "u1"
    payload = buf[m.end():]
    need = w * h * np.dtype(dtype).itemsize
    if len(payload) < need:
        raise TruncatedError("PGM payload truncated", need, len(payload))
    return np.frombuffer(payload[:need], dtype=dtype).reshape(h, w)


def side_by_side(rasters, gap: int = 2) -> np.ndarray:
    """Tile rasters horizontally after scaling each to [0, 1]; smaller ones are replicated up."""
    size = max(np.asarray(r).shape[0] for r in rasters)
    tiles = []
    for r in rasters:
        x = np.asarray(r, dtype=np.float64)
        if x.shape[0] != size:
            k = size // x.shape[0]
            x = np.repeat(np.repeat(x, k, axis=0), k, axis=1)
        lo, hi = x.min(), x.max()
        tiles.append(np.zeros_like(x) if hi <= lo else (x - lo) / (hi - lo))
        tiles.append(np.ones((size, gap)))
    return np.hstack(tiles[:-1])
