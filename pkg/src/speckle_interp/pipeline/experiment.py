"""End-to-end orchestration: generate, train both networks, evaluate, report."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..metrics import MetricsReport
from .config import ExperimentConfig
from .dataset import MANIFEST_NAME, DatasetManifest, generate_dataset, load_manifest
from .evaluate import METHODS, evaluate_workflow
from .report import write_report
from .train import TrainResult, train_internet, train_specklenet

log = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    manifest: DatasetManifest
    specklenet: TrainResult
    internet: TrainResult
    reports: list[MetricsReport]
    paths: dict[str, Path] = field(default_factory=dict)


def ensure_dataset(cfg: ExperimentConfig, workers: int = 1, digits=None) -> DatasetManifest:
    root = Path(cfg.dataset)
    if (root / MANIFEST_NAME).exists():
        return load_manifest(root)
    log.info("generating dataset under %s", root)
    return generate_dataset(cfg.generation, root, digits=digits, workers=workers)


def run_experiment(cfg: ExperimentConfig, out_dir, workers: int = 1, digits=None,
                   methods=METHODS, figures: bool = True, progress=None) -> ExperimentResult:
    cfg.validate()
    out_dir = Path(out_dir)
    manifest = ensure_dataset(cfg, workers, digits)
    spk = train_specklenet(cfg, out_dir / "specklenet.sil", manifest, progress)
    net = train_internet(cfg, out_dir / f"internet{cfg.variant}_{cfg.loss}_d{cfg.pitch_index}.sil", manifest, progress)
    examples: dict = {}
    reports = evaluate_workflow(net.model, spk.model, manifest, methods,
                                threshold=cfg.success_threshold, examples=examples)
    paths = write_report(reports, out_dir / "report", examples, figures=figures)
    return ExperimentResult(manifest, spk, net, reports, paths)


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Apply one seed to generation and to both trainers."""
    return replace(
        cfg,
        generation=replace(cfg.generation, base_seed=seed),
        internet_training=replace(cfg.internet_training, seed=seed),
        specklenet_training=replace(cfg.specklenet_training, seed=seed),
    )
