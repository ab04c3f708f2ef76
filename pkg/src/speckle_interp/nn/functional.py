"""Differentiable layer primitives and losses (NCHW layout)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..interp import InterpMethod, weight_matrix
from .tensor import Tensor, concat, make, sqrt, sub, tmean

__all__ = [
    "conv2d", "avg_pool2d", "relu", "upsample_bilinear2x", "dilate2x", "transposed_conv2x",
    "linear", "standardize", "concat", "npcc_loss", "mse_loss", "comloss_loss", "LOSSES",
]


def _im2col(x: np.ndarray, k: int, pad) -> np.ndarray:
    n, c, h, w = x.shape
    lo, hi = (pad, pad) if isinstance(pad, int) else pad
    if lo or hi:
        x = np.pad(x, ((0, 0), (0, 0), (lo, hi), (lo, hi)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # n, c, h, w, k, k
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, c * k * k)


def _col2im(cols: np.ndarray, shape: tuple[int, ...], k: int, pad) -> np.ndarray:
    n, c, h, w = shape
    lo, hi = (pad, pad) if isinstance(pad, int) else pad
    cols = cols.reshape(n, h, w, c, k, k)
    out = np.zeros((n, c, h + lo + hi, w + lo + hi), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + h, j:j + w] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out[:, :, lo:lo + h, lo:lo + w]


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    """Stride-1 'same' convolution with an odd square kernel."""
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c or k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d: input has {c} channels, kernel expects {ci} (kernel {k}x{k2})")
    pad = k // 2
    cols = _im2col(x.data, k, pad)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, h, w, o).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gw = (g2.T @ cols).reshape(weight.shape)
        gx = _col2im(g2 @ wmat, x.shape, k, pad) if x.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make(np.ascontiguousarray(out), parents, backward, "conv2d")


def avg_pool2d(x: Tensor, n: int) -> Tensor:
    """Window-n, stride-n average pooling (accumulated in float64)."""
    b, c, h, w = x.shape
    if h % n or w % n:
        raise ValueError(f"avg_pool2d: window {n} does not divide {h}x{w}")
    blocks = x.data.astype(np.float64).reshape(b, c, h // n, n, w // n, n)
    out = (blocks.sum(axis=(3, 5)) / (n * n)).astype(x.dtype)

    def backward(g):
        up = np.repeat(np.repeat(g, n, axis=2), n, axis=3)
        return (up / (n * n),)

    return make(out, (x,), backward, "avg_pool2d")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def upsample_bilinear2x(x: Tensor) -> Tensor:
    """Parameter-free 2x bilinear up-sampling, same convention as the classic baseline."""
    _, _, h, w = x.shape
    rows = weight_matrix(h, 2, InterpMethod.BILINEAR).astype(x.dtype)
    cols = weight_matrix(w, 2, InterpMethod.BILINEAR).astype(x.dtype)
    out = rows @ x.data @ cols.T
    return make(out, (x,), lambda g: (rows.T @ g @ cols,), "upsample_bilinear2x")


def dilate2x(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    out = np.zeros((b, c, 2 * h, 2 * w), dtype=x.dtype)
    out[:, :, ::2, ::2] = x.data
    return make(out, (x,), lambda g: (np.ascontiguousarray(g[:, :, ::2, ::2]),), "dilate2x")


@lru_cache(maxsize=8)
def _subpixel_taps(k: int) -> tuple[int, int, np.ndarray]:
    """Which kernel tap feeds each (output phase, input offset) pair.

    A stride-2 transposed convolution is a 'same' convolution of the
    zero-dilated input. Output ``2m + a`` only meets non-zero inputs ``m + d``
    through tap ``t = 2d - a + k//2``, so each of the two phases per axis is a
    small convolution at input resolution. Returns the lowest offset, the
    offset window size and a ``(2, window)`` tap table where ``k`` marks
    "no tap".
    """
    pad = k // 2
    pairs = [(a, t, (a + t - pad) // 2) for a in (0, 1) for t in range(k) if (a + t - pad) % 2 == 0]
    d0 = min(d for _, _, d in pairs)
    size = max(d for _, _, d in pairs) - d0 + 1
    table = np.full((2, size), k)
    for a, t, d in pairs:
        table[a, d - d0] = t
    return d0, size, table


def transposed_conv2x(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    """Stride-2 transposed convolution (kernel k, padding k//2, output padding 1).

    Equal to ``conv2d(dilate2x(x), weight, bias)`` but evaluated as four
    sub-pixel phases, which skips the multiplications by inserted zeros.
    """
    n, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c or k != k2 or k % 2 == 0:
        raise ValueError(f"transposed_conv2x: input has {c} channels, kernel expects {ci} (kernel {k}x{k2})")
    d0, size, table = _subpixel_taps(k)
    pad = (-d0, size - 1 + d0)
    cols = _im2col(x.data, size, pad)
    wz = np.zeros((o, c, k + 1, k + 1), dtype=weight.dtype)
    wz[:, :, :k, :k] = weight.data
    # (o, c, a, di, b, dj) -> (c, di, dj, o, a, b)
    big = wz[:, :, table[:, :, None, None], table[None, None, :, :]]
    wmat = big.transpose(1, 3, 5, 0, 2, 4).reshape(c * size * size, o * 4)
    out = (cols @ wmat).reshape(n, h, w, o, 2, 2).transpose(0, 3, 1, 4, 2, 5).reshape(n, o, 2 * h, 2 * w)
    if bias is not None:
        out = out + bias.data[:, None, None]

    def backward(g):
        g2 = g.reshape(n, o, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5).reshape(n * h * w, o * 4)
        gbig = (cols.T @ g2).reshape(c, size, size, o, 2, 2).transpose(3, 0, 4, 1, 5, 2)
        gwz = np.zeros_like(wz)
        np.add.at(gwz, (slice(None), slice(None), table[:, :, None, None], table[None, None, :, :]), gbig)
        gw = gwz[:, :, :k, :k]
        gx = _col2im(g2 @ wmat.T, x.shape, size, pad) if x.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make(np.ascontiguousarray(out), parents, backward, "transposed_conv2x")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None, out_shape: tuple[int, ...], gain: float = 1.0) -> Tensor:
    """Fully connected map over all non-batch axes."""
    b = x.shape[0]
    flat = x.data.reshape(b, -1)
    if flat.shape[1] != weight.shape[1]:
        raise ValueError(f"linear: expected {weight.shape[1]} input features, got {flat.shape[1]}")
    out = gain * (flat @ weight.data.T)
    if bias is not None:
        out += bias.data

    def backward(g):
        g2 = g.reshape(b, -1) * gain
        gx = (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None
        gw = g2.T @ flat
        if bias is None:
            return gx, gw
        return gx, gw, g.reshape(b, -1).sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make(out.reshape((b,) + tuple(out_shape)), parents, backward, "linear")


def _per_sample_mean(x: Tensor) -> Tensor:
    return tmean(x, axis=tuple(range(1, x.ndim)), keepdims=True)


def standardize(x: Tensor, eps: float = 1e-6) -> Tensor:
    """Zero mean, unit variance per sample."""
    c = sub(x, _per_sample_mean(x))
    sd = sqrt(_per_sample_mean(c * c))
    return c / (sd + eps)


def npcc_loss(pred: Tensor, target, eps: float = 1e-8) -> Tensor:
    """Negative Pearson correlation per sample, averaged over the batch.

    ``eps`` is added to the prediction's standard deviation so a flat
    prediction does not blow up the gradient during training.
    """
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    pc = sub(pred, _per_sample_mean(pred))
    tc = sub(target, _per_sample_mean(target))
    cov = _per_sample_mean(pc * tc)
    sp = sqrt(_per_sample_mean(pc * pc)) + eps
    st = sqrt(_per_sample_mean(tc * tc))
    return -tmean(cov / (sp * st))


def mse_loss(pred: Tensor, target) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=pred.dtype))
    d = sub(pred, target)
    return tmean(d * d)


def comloss_loss(pred: Tensor, target, eps: float = 1e-8) -> Tensor:
    return npcc_loss(pred, target, eps) + mse_loss(pred, target)


LOSSES = {"npcc": npcc_loss, "mse": mse_loss, "comloss": comloss_loss}
