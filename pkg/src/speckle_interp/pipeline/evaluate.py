"""The evaluation workflow: interpolate binned test speckles, score them, reconstruct digits."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateInputError
from ..interp import MIN_SIZE, InterpMethod, upsample
from ..metrics import MetricsReport, mse, mutual_correlation, pcc, success_rate
from ..nn.model import Model
from .dataset import DatasetManifest, RasterLoader

log = logging.getLogger(__name__)

CLASSIC = tuple(m.value for m in InterpMethod)
METHODS = CLASSIC + ("internet",)


@dataclass
class Example:
    """One test sample carried through a (rung, method) cell, for side-by-side images."""

    sample_id: int
    input: np.ndarray
    interpolated: np.ndarray
    target: np.ndarray
    reconstruction: np.ndarray | None
    digit: np.ndarray


def _safe_pcc(a, b, notes: list[str], what: str) -> float:
    try:
        return pcc(a, b)
    except DegenerateInputError as exc:
        log.warning("%s: %s", what, exc)
        notes.append(f"{what}: degenerate raster, PCC recorded as 0")
        return 0.0


def _safe_cm(rasters, notes: list[str], what: str) -> float | None:
    try:
        return mutual_correlation(list(rasters))
    except DegenerateInputError as exc:
        log.warning("%s: %s", what, exc)
        notes.append(f"{what}: C_m undefined (degenerate raster {exc.index})")
        return None


def interpolate(method: str, rasters: np.ndarray, n: int, internet: Model | None = None) -> np.ndarray:
    if method == "internet":
        if internet is None:
            raise ValueError("internet method needs a model")
        return internet.predict(rasters)
    out = np.stack([upsample(x, n, method) for x in rasters])
    # cubic undershoot would produce negative intensities
    return np.maximum(out, 0.0).astype(np.float32)


def internet_factor(model: Model) -> int:
    return model.output_shape[-1] // model.input_shape[-1]


def evaluate_workflow(internet: Model | None, specklenet: Model | None, manifest: DatasetManifest,
                      methods, rungs=None, threshold: float = 0.5,
                      examples: dict | None = None) -> list[MetricsReport]:
    """Score every (rung, method) cell on the held-out split.

    The d0 rung is fed straight to SpeckleNet (method ``direct``). Coarser
    rungs are up-sampled by each method, compared against d0, and then
    reconstructed. ``internet`` only applies at the rung its input size
    matches.
    """
    methods = list(methods)
    if not methods:
        raise ValueError("methods list is empty")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
    if "internet" in methods and internet is None:
        raise ValueError("internet method requested without a model")
    manifest.check_split()
    rungs = [i for i in (manifest.ladder if rungs is None else rungs)]
    loader = RasterLoader(manifest)
    ids = manifest.test_ids
    target = loader.speckles(ids, 0)
    digits = loader.digits(ids) if specklenet is not None else None
    reports: list[MetricsReport] = []

    def reconstruct(rasters, rep: MetricsReport):
        if specklenet is None:
            return None
        recon = specklenet.predict(rasters)
        rep.recon_pcc = [_safe_pcc(r, d, rep.notes, f"reconstruction {sid}") for r, d, sid in zip(recon, digits, ids)]
        rep.success_rate = success_rate(list(recon), list(digits), threshold)
        return recon

    if 0 in rungs:
        rep = MetricsReport(method="direct", pitch_index=0)
        rep.cm_before = rep.cm_after = _safe_cm(target, rep.notes, "d0 C_m")
        recon = reconstruct(target, rep)
        reports.append(rep)
        if examples is not None:
            examples[(0, "direct")] = Example(ids[0], target[0], target[0], target[0],
                                              None if recon is None else recon[0],
                                              None if digits is None else digits[0])

    for i in rungs:
        if i == 0:
            continue
        n = 2 ** i
        binned = loader.speckles(ids, i)
        cm_before = None
        for method in methods:
            if method == "internet" and internet_factor(internet) != n:
                continue
            if method in CLASSIC and binned.shape[-1] < MIN_SIZE[InterpMethod(method)]:
                log.warning("d%d: %s needs at least %d pixels per side; cell skipped",
                            i, method, MIN_SIZE[InterpMethod(method)])
                continue
            rep = MetricsReport(method=method, pitch_index=i)
            if cm_before is None:
                cm_before = _safe_cm(binned, rep.notes, f"d{i} binned C_m")
            rep.cm_before = cm_before
            interp = interpolate(method, binned, n, internet)
            rep.pcc = [_safe_pcc(a, t, rep.notes, f"d{i} {method} sample {sid}") for a, t, sid in zip(interp, target, ids)]
            rep.mse = [mse(a, t) for a, t in zip(interp, target)]
            rep.cm_after = _safe_cm(interp, rep.notes, f"d{i} {method} C_m")
            recon = reconstruct(interp, rep)
            reports.append(rep)
            if examples is not None:
                examples[(i, method)] = Example(ids[0], binned[0], interp[0], target[0],
                                                None if recon is None else recon[0],
                                                None if digits is None else digits[0])
    return reports
