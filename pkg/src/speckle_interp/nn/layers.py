"""Layer kinds used by the compact networks.

Every layer exposes a one-byte kind tag and a tuple of unsigned integer
hyperparameters; together with the flat weight blob this is all a checkpoint
needs to rebuild it.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import Tensor

NO_SLOT = 0xFFFFFFFF


class Layer:
    kind = ""
    tag = 0

    def __init__(self):
        self.params: list[Tensor] = []

    def hyper(self) -> tuple[int, ...]:
        return ()

    def param_shapes(self) -> list[tuple[int, ...]]:
        return [p.shape for p in self.params]

    def init(self, rng: np.random.Generator, dtype) -> None:
        """Fan-in scaled uniform weights, zero biases."""
        for p in self.params:
            if p.ndim == 1:
                p.data = np.zeros(p.shape, dtype=dtype)
            else:
                fan_in = int(np.prod(p.shape[1:]))
                bound = np.sqrt(6.0 / fan_in)
                p.data = rng.uniform(-bound, bound, size=p.shape).astype(dtype)

    def forward(self, x: Tensor, slots: dict[int, Tensor]) -> Tensor:
        raise NotImplementedError

    def out_shape(self, shape: tuple[int, int, int]) -> tuple[int, int, int]:
        return shape

    def __repr__(self):
        return f"{type(self).__name__}{self.hyper()}"


def _param(*shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)


class Conv2d(Layer):
    kind, tag = "conv2d", 1

    def __init__(self, cin: int, cout: int, k: int = 3):
        super().__init__()
        if k % 2 == 0 or k < 1:
            raise ValueError(f"conv2d kernel must be odd, got {k}")
        self.cin, self.cout, self.k = cin, cout, k
        self.params = [_param(cout, cin, k, k), _param(cout)]

    def hyper(self):
        return (self.cin, self.cout, self.k)

    def forward(self, x, slots):
        return F.conv2d(x, self.params[0], self.params[1])

    def out_shape(self, shape):
        if shape[0] != self.cin:
            raise ValueError(f"conv2d expects {self.cin} channels, got {shape[0]}")
        return (self.cout, shape[1], shape[2])


class AvgPool2d(Layer):
    kind, tag = "avg_pool2d", 2

    def __init__(self, n: int = 2):
        super().__init__()
        if n < 2:
            raise ValueError(f"pool window must be >= 2, got {n}")
        self.n = n

    def hyper(self):
        return (self.n,)

    def forward(self, x, slots):
        return F.avg_pool2d(x, self.n)

    def out_shape(self, shape):
        c, h, w = shape
        if h % self.n or w % self.n:
            raise ValueError(f"avg_pool2d({self.n}) cannot divide {h}x{w}")
        return (c, h // self.n, w // self.n)


class ReLU(Layer):
    kind, tag = "relu", 3

    def forward(self, x, slots):
        return F.relu(x)


class UpsampleBilinear2x(Layer):
    kind, tag = "upsample_bilinear2x", 4

    def forward(self, x, slots):
        return F.upsample_bilinear2x(x)

    def out_shape(self, shape):
        return (shape[0], 2 * shape[1], 2 * shape[2])


class TransposedConv2x(Conv2d):
    kind, tag = "transposed_conv2x", 5

    def forward(self, x, slots):
        return F.transposed_conv2x(x, self.params[0], self.params[1])

    def out_shape(self, shape):
        c, h, w = super().out_shape(shape)
        return (c, 2 * h, 2 * w)


class DenseBlock(Layer):
    """Up-sampling dense block.

    A transposed convolution doubles the resolution, then ``depth`` conv+relu
    layers each see the channel concatenation of everything produced so far.
    The block emits that full concatenation, ``growth * (depth + 1)`` channels.
    """

    kind, tag = "dense_block", 6

    def __init__(self, cin: int, growth: int, depth: int = 2, k: int = 3):
        super().__init__()
        if depth < 1:
            raise ValueError("dense block needs depth >= 1")
        self.cin, self.growth, self.depth, self.k = cin, growth, depth, k
        self.params = [_param(growth, cin, k, k), _param(growth)]
        for i in range(depth):
            self.params += [_param(growth, growth * (i + 1), k, k), _param(growth)]

    def hyper(self):
        return (self.cin, self.growth, self.depth, self.k)

    def forward(self, x, slots):
        feats = [F.relu(F.transposed_conv2x(x, self.params[0], self.params[1]))]
        for i in range(self.depth):
            w, b = self.params[2 + 2 * i], self.params[3 + 2 * i]
            inp = feats[0] if len(feats) == 1 else F.concat(feats, axis=1)
            feats.append(F.relu(F.conv2d(inp, w, b)))
        return F.concat(feats, axis=1)

    def out_shape(self, shape):
        if shape[0] != self.cin:
            raise ValueError(f"dense_block expects {self.cin} channels, got {shape[0]}")
        return (self.growth * (self.depth + 1), 2 * shape[1], 2 * shape[2])


class Standardize(Layer):
    """Per-sample zero mean, unit variance."""

    kind, tag = "standardize", 8

    def forward(self, x, slots):
        return F.standardize(x)


class Tap(Layer):
    """Remember the current activation under a slot id for a later bypass."""

    kind, tag = "tap", 9

    def __init__(self, slot: int = 0):
        super().__init__()
        self.slot = slot

    def hyper(self):
        return (self.slot,)

    def forward(self, x, slots):
        slots[self.slot] = x
        return x


class Linear(Layer):
    """Fully connected map onto a ``(c, h, w)`` activation.

    With ``source`` set, the layer reads the activation stored by the matching
    :class:`Tap` and adds its projection to the current activation (a global
    bypass). Bypass weights start at zero so the untrained network is exactly
    its convolutional path.

    ``gain`` multiplies the projection. A dense layer has no weight sharing,
    so under a pixel-averaged loss its gradients are far smaller than those of
    the convolutions; the gain rescales its effective step size without a
    separate learning rate.
    """

    kind, tag = "linear", 7

    def __init__(self, in_features: int, out_shape: tuple[int, int, int], source: int = NO_SLOT, gain: int = 1):
        super().__init__()
        if gain < 1:
            raise ValueError("linear gain must be a positive integer")
        self.gain = gain
        self.in_features = in_features
        self.shape_out = tuple(int(v) for v in out_shape)
        self.source = source
        self.params = [_param(int(np.prod(self.shape_out)), in_features), _param(int(np.prod(self.shape_out)))]

    @property
    def is_bypass(self) -> bool:
        return self.source != NO_SLOT

    def hyper(self):
        return (self.in_features, *self.shape_out, self.source, self.gain)

    def init(self, rng, dtype):
        super().init(rng, dtype)
        if self.is_bypass:
            self.params[0].data = np.zeros(self.params[0].shape, dtype=dtype)
        else:
            # keep the initial output at the fan-in scale regardless of gain
            self.params[0].data /= np.asarray(self.gain, dtype=dtype)

    def forward(self, x, slots):
        if not self.is_bypass:
            return F.linear(x, self.params[0], self.params[1], self.shape_out, self.gain)
        if self.source not in slots:
            raise ValueError(f"linear bypass reads slot {self.source}, which no tap has filled")
        return x + F.linear(slots[self.source], self.params[0], self.params[1], self.shape_out, self.gain)

    def out_shape(self, shape):
        if self.is_bypass:
            if tuple(shape) != self.shape_out:
                raise ValueError(f"bypass output {self.shape_out} does not match activation {shape}")
            return shape
        if int(np.prod(shape)) != self.in_features:
            raise ValueError(f"linear expects {self.in_features} features, got {int(np.prod(shape))}")
        return self.shape_out


LAYER_KINDS: dict[int, type[Layer]] = {
    cls.tag: cls
    for cls in (Conv2d, AvgPool2d, ReLU, UpsampleBilinear2x, TransposedConv2x, DenseBlock, Linear, Standardize, Tap)
}


def layer_from_spec(tag: int, hyper: tuple[int, ...]) -> Layer:
    try:
        cls = LAYER_KINDS[tag]
    except KeyError:
        raise ValueError(f"unknown layer kind tag {tag}") from None
    if cls is Linear:
        return Linear(hyper[0], tuple(hyper[1:4]), hyper[4], hyper[5])
    return cls(*hyper)
