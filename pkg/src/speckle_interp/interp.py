"""Classic polynomial up-sampling baselines.

All three kernels use half-pixel-center alignment: output cell ``j`` samples
source coordinate ``(j + 0.5) / n - 0.5``, which lines up with the block
centers produced by binning.  Borders replicate the edge value.  Every method is
separable, so the 2-D result is ``A @ x @ A.T`` with a 1-D weight matrix ``A``.
"""

from __future__ import annotations

from enum import Enum
from functools import lru_cache

import numpy as np

from .optics import SpecklePattern

CATMULL_ROM_A = -0.5


class InterpMethod(str, Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"


MIN_SIZE = {InterpMethod.NEAREST: 2, InterpMethod.BILINEAR: 2, InterpMethod.BICUBIC: 4}


def source_coords(size: int, n: int) -> np.ndarray:
    return (np.arange(size * n) + 0.5) / n - 0.5


def cubic_kernel(t: np.ndarray, a: float = CATMULL_ROM_A) -> np.ndarray:
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    inner = (a + 2) * t3 - (a + 3) * t2 + 1
    outer = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, inner, np.where(t < 2, outer, 0.0))


@lru_cache(maxsize=64)
def _weights(size: int, n: int, method: InterpMethod) -> np.ndarray:
    out = size * n
    a = np.zeros((out, size))
    rows = np.arange(out)
    if method is InterpMethod.NEAREST:
        a[rows, rows // n] = 1.0
    elif method is InterpMethod.BILINEAR:
        c = source_coords(size, n)
        i0 = np.floor(c).astype(int)
        t = c - i0
        np.add.at(a, (rows, np.clip(i0, 0, size - 1)), 1.0 - t)
        np.add.at(a, (rows, np.clip(i0 + 1, 0, size - 1)), t)
    else:
        c = source_coords(size, n)
        i0 = np.floor(c).astype(int)
        t = c - i0
        for k in (-1, 0, 1, 2):
            np.add.at(a, (rows, np.clip(i0 + k, 0, size - 1)), cubic_kernel(t - k))
    a.setflags(write=False)
    return a


def weight_matrix(size: int, n: int, method: InterpMethod | str) -> np.ndarray:
    """1-D interpolation matrix of shape ``(size * n, size)``."""
    return _weights(int(size), int(n), InterpMethod(method))


def upsample(x: np.ndarray, n: int, method: InterpMethod | str) -> np.ndarray:
    method = InterpMethod(method)
    arr = np.asarray(x, dtype=np.float64)
    if n < 1:
        raise ValueError("up-sampling factor must be >= 1")
    if arr.ndim != 2:
        raise ValueError("expected a 2-D raster")
    need = MIN_SIZE[method]
    if min(arr.shape) < need:
        raise ValueError(f"{method.value} needs a raster of at least {need}x{need}, got {arr.shape}")
    if n == 1:
        return arr.copy()
    if method is InterpMethod.NEAREST:
        return np.repeat(np.repeat(arr, n, axis=0), n, axis=1)
    rows = weight_matrix(arr.shape[0], n, method)
    cols = weight_matrix(arr.shape[1], n, method)
    return rows @ arr @ cols.T


def upsample_to(pattern: SpecklePattern, target_pitch_index: int, method: InterpMethod | str) -> SpecklePattern:
    src = pattern.pitch_index
    if src < 0 or target_pitch_index < 0:
        raise ValueError("pitch indices must be ladder rungs (>= 0)")
    if src < target_pitch_index:
        raise ValueError(f"source rung {src} is finer than target rung {target_pitch_index}")
    n = 2 ** (src - target_pitch_index)
    out = upsample(pattern.intensity, n, method)
    # bicubic undershoot would break the non-negative intensity contract
    return SpecklePattern(np.maximum(out, 0.0), pattern.pixel_pitch_um / n, target_pitch_index)
