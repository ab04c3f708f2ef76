"""Speckle simulator: phase object -> random phase screen -> far field.

The object and the diffuser share one plane; the camera sits in the Fraunhofer
zone, so the recorded field is the Fourier transform of
``exp(i * (object + screen))`` zero-padded by ``pad_factor``.  Only the central
``S x S`` window of the padded transform is kept, and it is evaluated directly
as a partial DFT so the cost does not grow with the pad factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError

TWO_PI = 2.0 * np.pi
DEFAULT_PITCH_UM = 2.5
RAW_PITCH_INDEX = -1
SLM_LEVELS = 127  # grayscale is squeezed into 0..127 of the 0..255 (0..2pi) range


@dataclass(frozen=True, eq=False)
class PhaseObject:
    phase: np.ndarray
    source_label: int | None = None

    def __post_init__(self):
        ph = np.asarray(self.phase, dtype=np.float64)
        if ph.ndim != 2 or ph.shape[0] != ph.shape[1]:
            raise ValueError(f"phase object must be a square 2-D raster, got shape {ph.shape}")
        if ph.size and (ph.min() < 0.0 or ph.max() > np.pi):
            raise ValueError("phase values must lie in [0, pi]")
        ph.setflags(write=False)
        object.__setattr__(self, "phase", ph)

    @property
    def size(self) -> int:
        return self.phase.shape[0]


@dataclass(frozen=True, eq=False)
class ScatteringMedium:
    screen: np.ndarray
    seed: int

    def __post_init__(self):
        sc = np.asarray(self.screen, dtype=np.float64)
        if sc.ndim != 2 or sc.shape[0] != sc.shape[1]:
            raise ValueError(f"screen must be a square 2-D raster, got shape {sc.shape}")
        sc.setflags(write=False)
        object.__setattr__(self, "screen", sc)

    @property
    def size(self) -> int:
        return self.screen.shape[0]


@dataclass(frozen=True, eq=False)
class SpecklePattern:
    intensity: np.ndarray
    pixel_pitch_um: float = DEFAULT_PITCH_UM
    pitch_index: int = 0

    def __post_init__(self):
        arr = np.asarray(self.intensity)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"speckle raster must be square 2-D, got shape {arr.shape}")
        if arr.size and np.min(arr) < 0:
            raise ValueError("speckle intensities must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "intensity", arr)
        object.__setattr__(self, "pixel_pitch_um", float(self.pixel_pitch_um))
        object.__setattr__(self, "pitch_index", int(self.pitch_index))

    @property
    def size(self) -> int:
        return self.intensity.shape[0]

    def contrast(self) -> float:
        x = self.intensity.astype(np.float64)
        return float(x.std() / x.mean())


def gray_to_phase(gray: np.ndarray) -> np.ndarray:
    """Map 8-bit gray levels to SLM phase: 0..255 -> 0..127 -> (g/255)*2pi."""
    g = np.asarray(gray, dtype=np.float64)
    levels = np.rint(g * SLM_LEVELS / 255.0)
    return levels / 255.0 * TWO_PI


def nearest_indices(src: int, dst: int) -> np.ndarray:
    return (np.arange(dst) * src) // dst


def load_phase_object(gray: np.ndarray, target_size: int, label: int | None = None) -> PhaseObject:
    g = np.asarray(gray)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"gray raster must be square, got shape {g.shape}")
    if g.size == 0 or g.min() < 0 or g.max() > 255:
        raise ValueError("gray values must lie in [0, 255]")
    if target_size < g.shape[0]:
        raise ValueError(f"target_size {target_size} is smaller than the source size {g.shape[0]}")
    idx = nearest_indices(g.shape[0], target_size)
    phase = gray_to_phase(g)[np.ix_(idx, idx)]
    return PhaseObject(phase, None if label is None else int(label))


def make_medium(seed: int, size: int) -> ScatteringMedium:
    if size < 8:
        raise ValueError("medium size must be >= 8")
    rng = np.random.default_rng(seed)
    screen = rng.random((size, size)) * TWO_PI
    screen[screen >= TWO_PI] = 0.0
    return ScatteringMedium(screen, int(seed))


def _field(obj: PhaseObject, medium: ScatteringMedium) -> np.ndarray:
    if obj.size != medium.size:
        raise ValueError(f"object size {obj.size} does not match medium size {medium.size}")
    return np.exp(1j * (obj.phase + medium.screen))


def far_field(obj: PhaseObject, medium: ScatteringMedium, pad_factor: int) -> tuple[np.ndarray, np.ndarray]:
    """Full padded input field and its (fftshifted) transform. Used for energy checks."""
    if pad_factor < 2:
        raise ValueError("pad_factor must be >= 2")
    n = obj.size
    padded = np.zeros((pad_factor * n, pad_factor * n), dtype=np.complex128)
    padded[:n, :n] = _field(obj, medium)
    return padded, np.fft.fftshift(np.fft.fft2(padded))


def _crop_dft_matrix(n: int, m: int, s: int) -> np.ndarray:
    # rows: frequencies -s//2 .. s//2-1 of an m-point DFT, columns: n input samples
    k = np.arange(s) - s // 2
    return np.exp(-2j * np.pi * np.outer(k, np.arange(n)) / m)


def propagate(obj: PhaseObject, medium: ScatteringMedium, pad_factor: int,
              size: int | None = None, pixel_pitch_um: float = DEFAULT_PITCH_UM) -> SpecklePattern:
    """Central ``size x size`` far-field intensity, scaled so a flat mean is ~1."""
    if pad_factor < 2:
        raise ValueError("pad_factor must be >= 2")
    field = _field(obj, medium)
    n = obj.size
    s = n if size is None else int(size)
    m = pad_factor * n
    if s > m:
        raise ValueError(f"output size {s} exceeds the padded plane {m}")
    a = _crop_dft_matrix(n, m, s)
    crop = a @ field @ a.T
    intensity = (crop.real ** 2 + crop.imag ** 2) / (n * n)
    return SpecklePattern(intensity, pixel_pitch_um, 0)


def flat_object(size: int) -> PhaseObject:
    return PhaseObject(np.zeros((size, size)))


def measure_pad_factor(pad_factor: int, size: int, trials: int, seed: int = 0) -> float:
    from .sampling import sampling_factor

    ss = np.random.SeedSequence(seed)
    flat = flat_object(size)
    vals = []
    for child in ss.spawn(trials):
        medium = make_medium(int(child.generate_state(1)[0]), size)
        vals.append(sampling_factor(propagate(flat, medium, pad_factor)))
    return float(np.mean(vals))


def calibrate_pad_factor(target_F: float, size: int, trials: int, seed: int = 0,
                         search: range = range(2, 17)) -> int:
    """Pick the pad factor whose mean measured F is closest to ``target_F``.

    Raises CalibrationError (carrying the measured table) when the best
    candidate is more than 20% away from the target.
    """
    if target_F <= 1:
        raise ValueError("target_F must be > 1")
    if trials < 8:
        raise ValueError("trials must be >= 8")
    table: list[tuple[int, float]] = []
    for pad in search:
        f = measure_pad_factor(pad, size, trials, seed)
        table.append((pad, f))
        if f > 2.0 * target_F:
            break  # F grows monotonically with the pad factor
    best_pad, best_f = min(table, key=lambda row: abs(row[1] - target_F))
    if abs(best_f - target_F) > 0.2 * target_F:
        rows = ", ".join(f"{p}:{f:.2f}" for p, f in table)
        raise CalibrationError(f"no pad factor within 20% of F={target_F} (measured {rows})", table)
    return best_pad
