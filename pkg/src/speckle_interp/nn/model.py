"""Sequential models and the two network builders."""

from __future__ import annotations

import math

import numpy as np

from .layers import (
    AvgPool2d, Conv2d, DenseBlock, Layer, Linear, ReLU, Standardize, Tap, UpsampleBilinear2x,
)
from .tensor import Tensor, no_grad


class Model:
    """An ordered list of layers applied to an NCHW batch.

    ``input_shape`` is the per-sample ``(channels, height, width)``. Shapes are
    propagated through every layer at construction time, so an inconsistent
    topology fails early and names the offending layer.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple[int, int, int], name: str = "model"):
        self.layers = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)
        self.name = name
        self.training = True
        self._backward_done = False
        self.output_shape = self._check_shapes()

    def _check_shapes(self) -> tuple[int, int, int]:
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.out_shape(shape)
            except ValueError as exc:
                raise ValueError(f"layer {i} ({layer.kind}): {exc}") from None
        return shape

    def init(self, seed: int, dtype=np.float32) -> "Model":
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init(rng, dtype)
        return self

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.params]

    @property
    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def astype(self, dtype) -> "Model":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def train(self) -> "Model":
        self.training = True
        return self

    def eval(self) -> "Model":
        self.training = False
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None
        self._backward_done = False

    def forward(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.parameters()[0].dtype if self.parameters() else np.float32))
        if x.ndim == 3:
            x = x.reshape((x.shape[0], 1) + x.shape[1:])
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(f"{self.name}: input shape {tuple(x.shape[1:])} != declared {self.input_shape}")
        slots: dict[int, Tensor] = {}
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, slots)
            except ValueError as exc:
                raise ValueError(f"{self.name} layer {i} ({layer.kind}): {exc}") from None
        return x

    __call__ = forward

    def backward(self, loss: Tensor) -> None:
        """Populate gradients for every parameter; unreachable ones get zeros."""
        self.zero_grad()
        loss.backward()
        for p in self.parameters():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
        self._backward_done = True

    def predict(self, x, batch_size: int = 64) -> np.ndarray:
        """Inference without graph recording; returns an (N, H, W) array for one-channel outputs."""
        x = np.asarray(x)
        outs = []
        with no_grad():
            for lo in range(0, len(x), batch_size):
                outs.append(self.forward(x[lo:lo + batch_size]).data)
        out = np.concatenate(outs) if outs else np.zeros((0,) + self.output_shape, dtype=np.float32)
        return out[:, 0] if out.shape[1] == 1 else out

    def summary(self) -> str:
        lines = [f"{self.name}: input {self.input_shape} -> output {self.output_shape}, {self.num_parameters} parameters"]
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = layer.out_shape(shape)
            lines.append(f"  {i:2d} {layer.kind:<20s} {str(layer.hyper()):<28s} -> {shape}")
        return "\n".join(lines)


def _is_pow2(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def build_internet(variant: int, n: int, channels: int = 8, size: int = 64, seed: int = 0,
                   bypass: bool = True, dense_depth: int = 1, gain: int = 32) -> Model:
    """Interpolation network from an (size/n)^2 raster to size^2.

    Encoder: two conv+relu layers and one 2x average pool. Decoder: log2(n)+1
    doubling stages, bilinear+conv (variant 1) or a dense transposed-conv block
    (variant 2), then a 1x1 conv to one channel. With ``bypass`` a global
    linear map from the standardized input is added to the output.
    """
    if variant not in (1, 2):
        raise ValueError(f"InterNet variant must be 1 or 2, got {variant}")
    if not _is_pow2(n) or not 4 <= n <= 32:
        raise ValueError(f"bin factor must be a power of two in [4, 32], got {n}")
    if size % (2 * n):
        raise ValueError(f"raster size {size} is not divisible by 2n = {2 * n}")
    m = size // n
    c = channels
    layers: list[Layer] = [Standardize(), Tap(0), Conv2d(1, c), ReLU(), Conv2d(c, c), ReLU(), AvgPool2d(2)]
    cin = c
    for _ in range(int(math.log2(n)) + 1):
        if variant == 1:
            layers += [UpsampleBilinear2x(), Conv2d(cin, c), ReLU()]
            cin = c
        else:
            layers += [DenseBlock(cin, c, dense_depth)]
            cin = c * (dense_depth + 1)
    layers.append(Conv2d(cin, 1, 1))
    if bypass:
        layers.append(Linear(m * m, (1, size, size), source=0, gain=gain))
    return Model(layers, (1, m, m), name=f"internet{variant}-n{n}").init(seed)


def build_specklenet(channels: int = 8, size: int = 64, seed: int = 0, gain: int = 8) -> Model:
    """Same-resolution reconstruction network (speckle in, digit out).

    The encoder pools 2x and then applies a global linear stage onto a
    quarter-resolution map, because the object information in a speckle is
    spread across the whole raster. The decoder up-samples twice with
    bilinear+conv stages.
    """
    if channels < 4:
        raise ValueError("SpeckleNet needs at least 4 channels")
    if size % 4:
        raise ValueError(f"raster size {size} must be divisible by 4")
    h, q = size // 2, size // 4
    c = channels
    layers: list[Layer] = [
        Standardize(), AvgPool2d(2), Linear(h * h, (1, q, q), gain=gain),
        Conv2d(1, c), ReLU(),
        UpsampleBilinear2x(), Conv2d(c, c), ReLU(),
        UpsampleBilinear2x(), Conv2d(c, 1, 1),
    ]
    return Model(layers, (1, size, size), name="specklenet").init(seed)
