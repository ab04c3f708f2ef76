"""Scalar evaluation quantities: PCC, NPCC, MSE, comloss, mutual correlation, success rate.

Everything is computed in float64 regardless of the storage precision of the
inputs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateInputError

# relative floor under which a raster counts as constant
_VAR_RTOL = 1e-24


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def _centered(x: np.ndarray, index: int | None = None) -> tuple[np.ndarray, float]:
    c = x - x.mean()
    ss = float(np.dot(c.ravel(), c.ravel()))
    scale = float(np.max(np.abs(x))) if x.size else 0.0
    if not np.isfinite(ss) or ss <= _VAR_RTOL * x.size * max(scale * scale, 1e-300):
        raise DegenerateInputError("degenerate input: raster has zero variance", index)
    return c, ss


def pcc(a, b) -> float:
    """Pearson correlation coefficient over all cells."""
    x, y = _pair(a, b)
    cx, sx = _centered(x, 0)
    cy, sy = _centered(y, 1)
    r = float(np.dot(cx.ravel(), cy.ravel()) / math.sqrt(sx * sy))
    return min(1.0, max(-1.0, r))


def npcc(a, b) -> float:
    return -pcc(a, b)


def mse(a, b) -> float:
    x, y = _pair(a, b)
    d = (x - y).ravel()
    return float(np.dot(d, d) / d.size)


def comloss(a, b) -> float:
    return npcc(a, b) + mse(a, b)


def _unit_rows(patterns) -> np.ndarray:
    rows = []
    shape = None
    for i, p in enumerate(patterns):
        x = np.asarray(p, dtype=np.float64)
        if shape is None:
            shape = x.shape
        elif x.shape != shape:
            raise ValueError(f"pattern {i} has shape {x.shape}, expected {shape}")
        c, ss = _centered(x, i)
        rows.append(c.ravel() / math.sqrt(ss))
    return np.stack(rows)


def _pair_from_linear(k: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    # row-major enumeration of the strict upper triangle of an m x m matrix
    i = (m - 2 - np.floor(np.sqrt(-8.0 * k + 4.0 * m * (m - 1) - 7) / 2.0 - 0.5)).astype(np.int64)
    j = (k + i + 1 - m * (m - 1) // 2 + (m - i) * ((m - i) - 1) // 2).astype(np.int64)
    return i, j


def mutual_correlation(patterns, max_pairs: int | None = None, seed: int = 0) -> float:
    """Mean PCC over unordered pairs.

    With ``max_pairs`` set and exceeded, a seeded uniform sample of distinct
    pairs is used instead (an estimator of the full mean).
    """
    z = _unit_rows(patterns)
    m = z.shape[0]
    if m < 2:
        raise ValueError("mutual correlation needs at least two patterns")
    total = m * (m - 1) // 2
    if max_pairs is None or total <= max_pairs:
        gram = z @ z.T
        vals = gram[np.triu_indices(m, k=1)]
        return math.fsum(vals.tolist()) / total
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=max_pairs, replace=False))
    i, j = _pair_from_linear(picks, m)
    vals = []
    for lo in range(0, max_pairs, 65536):
        a, b = i[lo:lo + 65536], j[lo:lo + 65536]
        vals.extend(np.einsum("ij,ij->i", z[a], z[b]).tolist())
    return math.fsum(vals) / max_pairs


def success_rate(reconstructions, targets, threshold: float = 0.5) -> float:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    if len(reconstructions) != len(targets):
        raise ValueError("reconstructions and targets differ in length")
    if not len(targets):
        raise ValueError("empty sample list")
    hits = 0
    for r, t in zip(reconstructions, targets):
        try:
            hits += pcc(r, t) >= threshold
        except DegenerateInputError:
            pass
    return hits / len(targets)


@dataclass
class MetricsReport:
    method: str
    pitch_index: int
    pcc: list[float] = field(default_factory=list)
    mse: list[float] = field(default_factory=list)
    cm_before: float | None = None
    cm_after: float | None = None
    recon_pcc: list[float] = field(default_factory=list)
    success_rate: float | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if any(not -1.0 <= v <= 1.0 for v in self.pcc + self.recon_pcc):
            raise ValueError("PCC values must lie in [-1, 1]")
        if any(v < 0 for v in self.mse):
            raise ValueError("MSE values must be non-negative")
        if self.success_rate is not None and not 0.0 <= self.success_rate <= 1.0:
            raise ValueError("success rate must lie in [0, 1]")

    @property
    def mean_pcc(self) -> float | None:
        return float(np.mean(self.pcc)) if self.pcc else None

    @property
    def mean_mse(self) -> float | None:
        return float(np.mean(self.mse)) if self.mse else None

    @property
    def mean_recon_pcc(self) -> float | None:
        return float(np.mean(self.recon_pcc)) if self.recon_pcc else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_pcc"] = self.mean_pcc
        d["mean_mse"] = self.mean_mse
        d["mean_recon_pcc"] = self.mean_recon_pcc
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        keys = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in keys})
