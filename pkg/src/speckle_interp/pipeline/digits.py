"""Handwritten-digit sources for phase objects.

Three sources are understood:

* a directory holding the MNIST IDX files (``train-images-idx3-ubyte`` and
  ``train-labels-idx1-ubyte``, optionally gzipped);
* ``"mlxtend"``, the 5,000-digit MNIST subset bundled with mlxtend, used when
  no IDX files are available offline;
* ``"synthetic"``, seeded stroke drawings for fast tests.

MNIST digits are size-normalized into a 20x20 box centred in a 28x28 frame.
``trim`` removes that many blank border pixels from each side, so the default
of 4 leaves exactly the digit box to be displayed across the whole aperture.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .idx import load_idx

MNIST_BORDER = 4
_IMAGE_NAMES = ("train-images-idx3-ubyte", "train-images.idx3-ubyte")
_LABEL_NAMES = ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte")


class DigitSourceError(RuntimeError):
    pass


def _find(directory: Path, names) -> Path | None:
    for name in names:
        for suffix in ("", ".gz"):
            p = directory / f"{name}{suffix}"
            if p.exists():
                return p
    return None


def load_idx_digits(directory) -> tuple[np.ndarray, np.ndarray]:
    directory = Path(directory)
    images, labels = _find(directory, _IMAGE_NAMES), _find(directory, _LABEL_NAMES)
    if images is None or labels is None:
        raise DigitSourceError(f"no MNIST IDX files in {directory}")
    x, y = load_idx(images), load_idx(labels)
    if len(x) != len(y):
        raise DigitSourceError(f"{len(x)} images but {len(y)} labels in {directory}")
    return x, y.astype(np.int64)


def load_mlxtend_digits() -> tuple[np.ndarray, np.ndarray]:
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:
        raise DigitSourceError("mlxtend is not installed (pip install mlxtend)") from exc
    x, y = mnist_data()
    return np.rint(x).clip(0, 255).astype(np.uint8).reshape(-1, 28, 28), y.astype(np.int64)


def synthetic_digits(count: int, seed: int = 0, size: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """Random thick polylines inside the central box, labelled by stroke count."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    lo, hi = MNIST_BORDER + 1.0, size - MNIST_BORDER - 2.0
    out = np.zeros((count, size, size), dtype=np.uint8)
    labels = np.zeros(count, dtype=np.int64)
    for k in range(count):
        strokes = int(rng.integers(1, 4))
        pts = rng.uniform(lo, hi, size=(strokes + 1, 2))
        img = np.zeros((size, size))
        for (y0, x0), (y1, x1) in zip(pts[:-1], pts[1:]):
            t = np.clip(((yy - y0) * (y1 - y0) + (xx - x0) * (x1 - x0)) / max((y1 - y0) ** 2 + (x1 - x0) ** 2, 1e-9), 0, 1)
            dist = np.hypot(yy - (y0 + t * (y1 - y0)), xx - (x0 + t * (x1 - x0)))
            img = np.maximum(img, np.clip(2.0 - dist, 0, 1))
        out[k] = np.rint(img * 255).astype(np.uint8)
        labels[k] = strokes
    return out, labels


def load_digits(source: str | os.PathLike | None = None, count: int | None = None, seed: int = 0):
    """Resolve ``source`` to ``(images u8 [N,28,28], labels)``.

    ``None`` looks for IDX files under ``$SIL_DATA_DIR/mnist`` and falls back
    to the mlxtend subset.
    """
    if source is None:
        root = os.environ.get("SIL_DATA_DIR")
        if root and _find(Path(root) / "mnist", _IMAGE_NAMES):
            return load_idx_digits(Path(root) / "mnist")
        return load_mlxtend_digits()
    if source == "mlxtend":
        return load_mlxtend_digits()
    if source == "synthetic":
        return synthetic_digits(count or 100, seed)
    return load_idx_digits(source)


def trim_border(images: np.ndarray, trim: int = MNIST_BORDER) -> np.ndarray:
    images = np.asarray(images)
    if trim < 0 or 2 * trim >= images.shape[-1]:
        raise ValueError(f"cannot trim {trim} pixels from a {images.shape[-1]}-pixel frame")
    return images[..., trim:images.shape[-2] - trim, trim:images.shape[-1] - trim] if trim else images
