"""Finite-difference checks for every layer kind and loss, in float64."""

from __future__ import annotations

import numpy as np
import pytest

from speckle_interp.metrics import mse, npcc
from speckle_interp.nn import functional as fn
from speckle_interp.nn.layers import (
    AvgPool2d, Conv2d, DenseBlock, Linear, ReLU, Standardize, Tap, TransposedConv2x, UpsampleBilinear2x,
)
from speckle_interp.nn.tensor import Tensor, concat, div, mul, sqrt, tmean, tsum

TRIALS = 20
# small enough that a probe rarely straddles a ReLU kink, large enough for f64 round-off
EPS = 1e-7
TOL = 1e-4


def _tensor(rng, shape, positive=False):
    x = rng.standard_normal(shape)
    if positive:
        x = np.abs(x) + 0.5
    return Tensor(x, requires_grad=True)


def _check(fun, leaves, rng, probes=6):
    """Compare autograd against central differences at a few random coordinates per leaf."""
    out = fun()
    weights = rng.standard_normal(out.shape)
    loss = tsum(mul(out, Tensor(weights)))
    for t in leaves:
        t.grad = None
    loss.backward()
    for t in leaves:
        assert t.grad is not None and t.grad.shape == t.data.shape
        flat = t.data.reshape(-1)
        for idx in rng.choice(flat.size, size=min(probes, flat.size), replace=False):
            old = flat[idx]
            flat[idx] = old + EPS
            hi = float(np.sum(fun().data * weights))
            flat[idx] = old - EPS
            lo = float(np.sum(fun().data * weights))
            flat[idx] = old
            num = (hi - lo) / (2 * EPS)
            ana = t.grad.reshape(-1)[idx]
            assert abs(num - ana) <= TOL * max(1.0, abs(num), abs(ana)), (t.name, idx, num, ana)


def _init(layer, rng):
    layer.init(rng, np.float64)
    # bypass weights start at zero; perturb them so their input gradient is exercised
    for p in layer.params:
        p.data = p.data + 0.1 * rng.standard_normal(p.shape)
    return layer


LAYERS = {
    "conv2d": lambda: Conv2d(2, 3, 3),
    "conv2d_1x1": lambda: Conv2d(2, 1, 1),
    "avg_pool2d": lambda: AvgPool2d(2),
    "relu": lambda: ReLU(),
    "upsample_bilinear2x": lambda: UpsampleBilinear2x(),
    "transposed_conv2x": lambda: TransposedConv2x(2, 3, 3),
    "dense_block": lambda: DenseBlock(2, 2, depth=2),
    "linear": lambda: Linear(128, (1, 4, 4), gain=4),
    "standardize": lambda: Standardize(),
    "tap": lambda: Tap(0),
}


@pytest.mark.parametrize("kind", sorted(LAYERS))
def test_layer_gradients(kind):
    for trial in range(TRIALS):
        rng = np.random.default_rng(1000 + trial)
        layer = _init(LAYERS[kind](), rng)
        x = _tensor(rng, (2, 2, 8, 8))
        _check(lambda: layer.forward(x, {}), [x, *layer.params], rng)


def test_linear_bypass_gradients():
    for trial in range(TRIALS):
        rng = np.random.default_rng(2000 + trial)
        layer = _init(Linear(16, (2, 8, 8), source=0, gain=8), rng)
        x = _tensor(rng, (2, 2, 8, 8))
        src = _tensor(rng, (2, 1, 4, 4))
        _check(lambda: layer.forward(x, {0: src}), [x, src, *layer.params], rng)


@pytest.mark.parametrize("loss", sorted(fn.LOSSES))
def test_loss_gradients(loss):
    f = fn.LOSSES[loss]
    for trial in range(TRIALS):
        rng = np.random.default_rng(3000 + trial)
        pred = _tensor(rng, (3, 1, 8, 8))
        target = rng.standard_normal((3, 1, 8, 8))
        _check(lambda: f(pred, target), [pred], rng, probes=10)


def test_elementwise_op_gradients():
    for trial in range(TRIALS):
        rng = np.random.default_rng(4000 + trial)
        a = _tensor(rng, (2, 3, 4))
        b = _tensor(rng, (1, 3, 1), positive=True)
        _check(lambda: div(sqrt(mul(a, a) + 1.0), b) - tmean(a, axis=2, keepdims=True), [a, b], rng)
        c = _tensor(rng, (2, 1, 4))
        _check(lambda: concat([a, c], axis=1).reshape(2, 16), [a, c], rng)


def test_losses_agree_with_metrics():
    rng = np.random.default_rng(5)
    pred, target = rng.random((2, 1, 1, 16, 16))
    assert fn.npcc_loss(Tensor(pred), target).item() == pytest.approx(npcc(pred, target), abs=1e-6)
    assert fn.mse_loss(Tensor(pred), target).item() == pytest.approx(mse(pred, target), abs=1e-6)


def test_batch_loss_is_mean_of_per_sample_losses():
    rng = np.random.default_rng(6)
    pred, target = rng.random((2, 4, 1, 8, 8))
    per = [npcc(p, t) for p, t in zip(pred, target)]
    assert fn.npcc_loss(Tensor(pred), target).item() == pytest.approx(np.mean(per), abs=1e-9)


def test_mse_scalar_weight_gradient():
    rng = np.random.default_rng(7)
    x, y = rng.random((2, 1, 1, 8, 8))
    w = Tensor(np.array(1.7), requires_grad=True)
    fn.mse_loss(mul(x, w), y).backward()
    assert w.grad == pytest.approx(2 * np.mean(x * (1.7 * x - y)), abs=1e-6)


def test_npcc_gradient_orthogonal_to_rescaling():
    rng = np.random.default_rng(8)
    y = rng.random((1, 1, 8, 8))
    pred = Tensor(y.copy(), requires_grad=True)
    fn.npcc_loss(pred, y, eps=0.0).backward()
    direction = y - y.mean()
    assert abs(float(np.sum(pred.grad * direction))) < 1e-5


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        mul(x, 2.0).backward()


@pytest.mark.parametrize("k", [1, 3, 5])
def test_transposed_conv_equals_conv_of_dilated_input(rng, k):
    x, w, b = _tensor(rng, (2, 3, 5, 6)), _tensor(rng, (4, 3, k, k)), _tensor(rng, (4,))
    fast = fn.transposed_conv2x(x, w, b)
    ref = fn.conv2d(fn.dilate2x(x), w, b)
    np.testing.assert_allclose(fast.data, ref.data, atol=1e-12)
    g = Tensor(rng.standard_normal(ref.shape))
    tsum(mul(fast, g)).backward()
    fast_grads = [t.grad.copy() for t in (x, w, b)]
    for t in (x, w, b):
        t.grad = None
    tsum(mul(ref, g)).backward()
    for a, t in zip(fast_grads, (x, w, b)):
        np.testing.assert_allclose(a, t.grad, atol=1e-10)
