"""Experiment configuration objects and their JSON form."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Invalid or unreadable configuration (CLI exit code 2)."""


@dataclass
class TrainingConfig:
    epochs: int = 100
    batch_size: int = 16
    lr0: float = 0.05
    lr_min: float = 0.0
    loss: str = "npcc"
    seed: int = 0
    momentum: float = 0.0

    def validate(self) -> "TrainingConfig":
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.lr0 < 0 or self.lr_min < 0 or self.lr_min > self.lr0:
            raise ConfigError("need 0 <= lr_min <= lr0")
        if self.loss not in ("npcc", "comloss", "mse"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        return self


@dataclass
class DatasetConfig:
    count: int = 2200
    test_count: int | None = 200
    base_seed: int = 0
    size: int = 64
    target_F: float = 17.0
    pad_factor: int | None = None
    calibration_trials: int = 16
    ladder: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16])
    digits: str | None = None
    trim: int = 4

    @property
    def n_test(self) -> int:
        # the paper keeps 1% of its samples for testing
        return self.test_count if self.test_count is not None else max(1, round(0.01 * self.count))

    def validate(self) -> "DatasetConfig":
        if self.count < 2:
            raise ConfigError("dataset needs at least two samples")
        if not 1 <= self.n_test < self.count:
            raise ConfigError(f"test split {self.n_test} must lie in [1, count)")
        if self.size < 8:
            raise ConfigError("raster size must be >= 8")
        if not self.ladder or self.ladder[0] != 1:
            raise ConfigError("ladder must start at n = 1 (the d0 rung)")
        for n in self.ladder:
            if n < 1 or n & (n - 1) or self.size % n:
                raise ConfigError(f"ladder factor {n} must be a power of two dividing {self.size}")
        if self.pad_factor is not None and self.pad_factor < 2:
            raise ConfigError("pad_factor must be >= 2")
        return self


@dataclass
class ExperimentConfig:
    dataset: str = ""
    pitch_index: int = 2
    variant: int = 1
    loss: str = "comloss"
    channels: int = 8
    gain: int = 32
    specklenet_channels: int = 8
    specklenet_gain: int = 32
    success_threshold: float = 0.5
    internet_training: TrainingConfig = field(default_factory=lambda: TrainingConfig(epochs=30, loss="comloss"))
    specklenet_training: TrainingConfig = field(default_factory=lambda: TrainingConfig(epochs=30, loss="npcc"))
    generation: DatasetConfig = field(default_factory=DatasetConfig)

    @property
    def bin_factor(self) -> int:
        return 2 ** self.pitch_index

    def validate(self) -> "ExperimentConfig":
        if not 2 <= self.pitch_index <= 7:
            raise ConfigError(f"InterNet input rung must be d2..d7, got d{self.pitch_index}")
        if self.variant not in (1, 2):
            raise ConfigError("variant must be 1 or 2")
        if self.loss not in ("npcc", "comloss"):
            raise ConfigError("InterNet loss must be npcc or comloss")
        if not 0.0 < self.success_threshold < 1.0:
            raise ConfigError("success threshold must lie in (0, 1)")
        if self.channels < 1 or self.specklenet_channels < 4 or self.gain < 1 or self.specklenet_gain < 1:
            raise ConfigError("invalid network width or gain")
        self.internet_training.validate()
        self.specklenet_training.validate()
        self.generation.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key, sub in (("internet_training", TrainingConfig), ("specklenet_training", TrainingConfig),
                             ("generation", DatasetConfig)):
                if key in d:
                    d[key] = _sub(sub, d[key])
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _sub(cls, value):
    if isinstance(value, cls):
        return value
    if not isinstance(value, dict):
        raise ConfigError(f"{cls.__name__} must be a JSON object")
    unknown = set(value) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**value)


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return ExperimentConfig.from_dict(raw)
