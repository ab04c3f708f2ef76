"""Nyquist bookkeeping for speckle rasters and pixel binning."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateInputError
from .optics import RAW_PITCH_INDEX, SpecklePattern


@dataclass(frozen=True)
class LadderRung:
    n: int
    ds_um: float
    d: float


@dataclass(frozen=True)
class SamplingSpec:
    F: float
    p_um: float
    D_um: float
    dc_um: float
    ladder: list[LadderRung] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "F": self.F,
            "p_um": self.p_um,
            "D_um": self.D_um,
            "dc_um": self.dc_um,
            "ladder": [asdict(r) for r in self.ladder],
        }

    def format_table(self) -> str:
        lines = [
            f"F      = {self.F:10.4f} px",
            f"p      = {self.p_um:10.4f} um",
            f"D      = {self.D_um:10.4f} um",
            f"d_c    = {self.dc_um:10.4f} um",
            "",
            f"{'i':>3} {'n':>6} {'d_s [um]':>12} {'d = d_s/d_c':>14}",
        ]
        for i, r in enumerate(self.ladder):
            lines.append(f"{i:>3} {r.n:>6} {r.ds_um:>12.3f} {r.d:>14.3f}")
        return "\n".join(lines)


def _raster(x) -> np.ndarray:
    if isinstance(x, SpecklePattern):
        return x.intensity
    return np.asarray(x)


def autocorrelate(pattern) -> np.ndarray:
    """Mean-subtracted circular autocorrelation, peak normalized to 1 at the center."""
    x = np.asarray(_raster(pattern), dtype=np.float64)
    if x.ndim != 2 or min(x.shape) < 8:
        raise ValueError(f"autocorrelation needs a 2-D raster of at least 8x8, got {x.shape}")
    x = x - x.mean()
    spec = np.fft.fft2(x)
    ac = np.fft.ifft2(spec.real ** 2 + spec.imag ** 2).real
    zero_lag = ac[0, 0]
    if not zero_lag > 0:
        raise DegenerateInputError("constant raster has no defined autocorrelation")
    return np.fft.fftshift(ac / zero_lag)


def sampling_factor(pattern) -> float:
    """Pixel area of the autocorrelation half-maximum region (pixels per grain)."""
    return float(np.count_nonzero(autocorrelate(pattern) >= 0.5))


def grain_diameter(F: float, p_um: float) -> float:
    # pi * (D/2)^2 = F * p^2
    return 2.0 * math.sqrt(F * p_um * p_um / math.pi)


def sampling_table(F: float, p_um: float, bin_factors) -> SamplingSpec:
    factors = [int(n) for n in bin_factors]
    if F <= 0 or p_um <= 0:
        raise ValueError("F and p_um must be positive")
    if not factors or any(n < 1 for n in factors):
        raise ValueError("bin factors must be a non-empty list of positive integers")
    if any(b <= a for a, b in zip(factors, factors[1:])):
        raise ValueError("bin factors must be strictly increasing")
    D = grain_diameter(F, p_um)
    dc = D / 2.0
    ladder = [LadderRung(n, n * p_um, n * p_um / dc) for n in factors]
    return SamplingSpec(float(F), float(p_um), D, dc, ladder)


def bin_raster(x: np.ndarray, n: int) -> np.ndarray:
    """n x n block means of a 2-D raster, accumulated in float64."""
    a = np.asarray(x, dtype=np.float64)
    if n < 1:
        raise ValueError("bin factor must be >= 1")
    h, w = a.shape
    if h % n or w % n:
        raise ValueError(f"bin factor {n} does not divide raster shape {a.shape}")
    if n == 1:
        return a.copy()
    return a.reshape(h // n, n, w // n, n).sum(axis=(1, 3)) / (n * n)


def _next_pitch_index(index: int, n: int) -> int:
    if n == 1:
        return index
    if index < 0 or n & (n - 1):
        return RAW_PITCH_INDEX
    return index + n.bit_length() - 1


def bin_pattern(pattern: SpecklePattern, n: int) -> SpecklePattern:
    out = bin_raster(pattern.intensity, n)
    return SpecklePattern(out, pattern.pixel_pitch_um * n, _next_pitch_index(pattern.pitch_index, n))
