"""Dataset generation and the on-disk manifest.

Layout under the dataset root::

    objects/00000.pho        phase object shown on the modulator
    digits/00000.spk         digit target, S x S, scaled to [0, 1]
    d0/00000.spk ...         one directory per ladder rung (d_i holds n = 2**i binning)
    manifest.json            written last; its presence marks a complete dataset
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..nn.checkpoint import write_atomic
from ..optics import (
    DEFAULT_PITCH_UM, RAW_PITCH_INDEX, calibrate_pad_factor, load_phase_object, make_medium,
    measure_pad_factor, nearest_indices, propagate,
)
from ..sampling import bin_raster
from .config import DatasetConfig
from .digits import load_digits, trim_border
from .formats import (
    PHASE_MAGIC, SPECKLE_MAGIC, raster_bytes, read_raster,
)

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class DataError(RuntimeError):
    """Missing, inconsistent or unreadable dataset (CLI exit code 3)."""


@dataclass
class SampleRecord:
    id: int
    label: int
    files: dict[str, str]
    object: str
    digit: str


@dataclass
class DatasetManifest:
    base_seed: int
    count: int
    train_ids: list[int]
    test_ids: list[int]
    size: int
    pad_factor: int
    measured_F: float
    ladder: list[int]
    pixel_pitch_um: float
    medium_seed: int
    trim: int
    digits_source: str
    samples: list[SampleRecord] = field(default_factory=list)
    root: Path | None = field(default=None, compare=False, repr=False)

    @property
    def bin_factors(self) -> list[int]:
        return [2 ** i for i in self.ladder]

    def path(self, rel: str) -> Path:
        if self.root is None:
            raise DataError("manifest has no root directory")
        return self.root / rel

    def record(self, sample_id: int) -> SampleRecord:
        rec = self.samples[sample_id]
        if rec.id != sample_id:
            raise DataError(f"manifest sample order is corrupt at id {sample_id}")
        return rec

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("root")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict, root: Path | None = None) -> "DatasetManifest":
        d = dict(d)
        d["samples"] = [SampleRecord(**s) for s in d.get("samples", [])]
        return cls(**d, root=root)

    def check_split(self) -> None:
        train, test = set(self.train_ids), set(self.test_ids)
        if train & test:
            raise DataError(f"train and test splits share ids {sorted(train & test)[:5]}")
        if len(train) + len(test) != self.count:
            raise DataError("split sizes do not add up to the sample count")

    def verify(self) -> None:
        """Check that every listed file exists, parses, and that binned rungs match re-binned d0."""
        self.check_split()
        for rec in self.samples:
            d0, _, _, _ = _read(self.path(rec.files["0"]), SPECKLE_MAGIC)
            for key, rel in rec.files.items():
                data, _, index, _ = _read(self.path(rel), SPECKLE_MAGIC)
                n = 2 ** int(key)
                if index != int(key) or not np.array_equal(data, bin_raster(d0, n).astype(np.float32)):
                    raise DataError(f"sample {rec.id}: rung d{key} does not equal bin(d0, {n})")
            _read(self.path(rec.object), PHASE_MAGIC)
            _read(self.path(rec.digit), SPECKLE_MAGIC)


def _read(path: Path, magic: bytes):
    try:
        return read_raster(path, magic)
    except (OSError, FormatError) as exc:
        raise DataError(f"{path}: {exc}") from None


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    path = root / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"no {MANIFEST_NAME} under {root} (dataset missing or generation incomplete)")
    try:
        return DatasetManifest.from_dict(json.loads(path.read_text()), root)
    except (json.JSONDecodeError, TypeError) as exc:
        raise DataError(f"{path}: malformed manifest ({exc})") from None


def split_ids(count: int, n_test: int, seed: int) -> tuple[list[int], list[int]]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    perm = rng.permutation(count)
    return sorted(int(i) for i in perm[n_test:]), sorted(int(i) for i in perm[:n_test])


def _sample_files(k: int, ladder: list[int]) -> tuple[dict[str, str], str, str]:
    name = f"{k:05d}"
    return {str(i): f"d{i}/{name}.spk" for i in ladder}, f"objects/{name}.pho", f"digits/{name}.spk"


def generate_dataset(cfg: DatasetConfig, out_dir, digits: tuple[np.ndarray, np.ndarray] | None = None,
                     workers: int = 1) -> DatasetManifest:
    """Simulate ``cfg.count`` speckle/digit pairs through one fixed medium and write them to ``out_dir``."""
    cfg.validate()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest_path = root / MANIFEST_NAME
    if manifest_path.exists():
        manifest_path.unlink()  # an interrupted re-run must not look complete

    if digits is None:
        try:
            digits = load_digits(cfg.digits, cfg.count, cfg.base_seed)
        except Exception as exc:
            raise DataError(f"cannot load digits from {cfg.digits or 'default source'}: {exc}") from None
    images, labels = digits
    if len(images) < cfg.count:
        raise DataError(f"digit source has {len(images)} images, {cfg.count} requested")
    order = np.random.default_rng(np.random.SeedSequence([cfg.base_seed, 1])).permutation(len(images))[:cfg.count]
    boxes = trim_border(images, cfg.trim)

    if cfg.pad_factor is None:
        pad = calibrate_pad_factor(cfg.target_F, cfg.size, cfg.calibration_trials, seed=cfg.base_seed)
    else:
        pad = cfg.pad_factor
    measured = measure_pad_factor(pad, cfg.size, cfg.calibration_trials, seed=cfg.base_seed)
    log.info("pad factor %d gives F = %.2f (target %.1f)", pad, measured, cfg.target_F)

    medium = make_medium(cfg.base_seed, cfg.size)
    ladder = [int(math.log2(n)) for n in cfg.ladder]
    target_idx = nearest_indices(boxes.shape[-1], cfg.size)

    def make_sample(k: int) -> SampleRecord:
        src = int(order[k])
        gray = boxes[src]
        obj = load_phase_object(gray, cfg.size, int(labels[src]))
        d0 = propagate(obj, medium, pad).intensity.astype(np.float32)
        files, obj_rel, digit_rel = _sample_files(k, ladder)
        for i, n in zip(ladder, cfg.ladder):
            data = d0 if n == 1 else bin_raster(d0, n).astype(np.float32)
            write_atomic(root / files[str(i)], raster_bytes(data, DEFAULT_PITCH_UM * n, i, SPECKLE_MAGIC))
        write_atomic(root / obj_rel, raster_bytes(obj.phase, 0.0, RAW_PITCH_INDEX, PHASE_MAGIC))
        target = gray[np.ix_(target_idx, target_idx)].astype(np.float32) / np.float32(255.0)
        write_atomic(root / digit_rel, raster_bytes(target, 0.0, RAW_PITCH_INDEX, SPECKLE_MAGIC))
        return SampleRecord(k, int(labels[src]), files, obj_rel, digit_rel)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(make_sample, range(cfg.count)))
    else:
        samples = [make_sample(k) for k in range(cfg.count)]

    train_ids, test_ids = split_ids(cfg.count, cfg.n_test, cfg.base_seed)
    manifest = DatasetManifest(
        base_seed=cfg.base_seed, count=cfg.count, train_ids=train_ids, test_ids=test_ids,
        size=cfg.size, pad_factor=int(pad), measured_F=round(measured, 6), ladder=ladder,
        pixel_pitch_um=DEFAULT_PITCH_UM, medium_seed=medium.seed, trim=cfg.trim,
        digits_source=str(cfg.digits or "default"), samples=samples, root=root,
    )
    write_atomic(manifest_path, manifest.to_json().encode("utf-8"))
    return manifest


class IsolationError(RuntimeError):
    """A loader was asked for a file category it has been barred from."""


class RasterLoader:
    """Reads dataset rasters and records every path it touches.

    ``forbid("digit")`` makes any later digit or object read raise, which is how
    the interpolation trainer proves it never sees the hidden objects.
    """

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self.reads: list[str] = []
        self._forbidden: set[str] = set()

    def forbid(self, *categories: str) -> "RasterLoader":
        self._forbidden.update(categories)
        return self

    def _load(self, category: str, rel: str, magic: bytes) -> np.ndarray:
        if category in self._forbidden:
            raise IsolationError(f"{category} raster {rel} requested from a loader barred from {category} files")
        self.reads.append(rel)
        data, _, _, _ = _read(self.manifest.path(rel), magic)
        return data

    def speckle(self, sample_id: int, pitch_index: int) -> np.ndarray:
        rec = self.manifest.record(sample_id)
        try:
            rel = rec.files[str(pitch_index)]
        except KeyError:
            raise DataError(f"rung d{pitch_index} is not in the dataset ladder") from None
        return self._load("speckle", rel, SPECKLE_MAGIC)

    def digit(self, sample_id: int) -> np.ndarray:
        return self._load("digit", self.manifest.record(sample_id).digit, SPECKLE_MAGIC)

    def phase(self, sample_id: int) -> np.ndarray:
        return self._load("digit", self.manifest.record(sample_id).object, PHASE_MAGIC)

    def speckles(self, ids, pitch_index: int, normalize: bool = True) -> np.ndarray:
        out = np.stack([self.speckle(i, pitch_index) for i in ids])
        return mean_normalize(out) if normalize else out

    def digits(self, ids) -> np.ndarray:
        return np.stack([self.digit(i) for i in ids])


def mean_normalize(rasters: np.ndarray) -> np.ndarray:
    """Divide each raster by its own mean (camera counts carry an arbitrary scale)."""
    x = np.asarray(rasters, dtype=np.float32)
    mean = x.reshape(len(x), -1).mean(axis=1, dtype=np.float64).astype(np.float32)
    if np.any(mean <= 0):
        raise DataError("raster with non-positive mean cannot be normalized")
    return x / mean.reshape((-1,) + (1,) * (x.ndim - 1))
