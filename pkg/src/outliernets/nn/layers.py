"""Layer vocabulary: immutable descriptions plus runtime forward/backward.

Each layer kind is a frozen dataclass that knows its output shape, parameter
count, and arithmetic cost, so whole architectures can be analyzed without
allocating any weights. ``make_layer`` turns a kind into a runtime layer
with parameters and hand-written forward/backward passes.

Conventions:

- Activation-free shapes are ``(channels, height, width)`` for image tensors
  and ``(n,)`` after Flatten; the batch dimension is implicit.
- Convolutions use 3x3 kernels, stride 1 or 2, and cross-correlation.
- MACs count multiply-accumulates of the linear maps only. FLOPs count
  2 per MAC, plus 1 per output element for bias addition, plus 1 per element
  for relu/sigmoid activations ("linear" is the identity and costs 0).
- Weight initialization is He-uniform: U(-sqrt(6/fan_in), +sqrt(6/fan_in)),
  biases zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ArchError, ShapeError
from . import kernels

KERNEL_SIZE = 3
ACTIVATIONS = ("relu", "sigmoid", "linear")

Shape = tuple[int, ...]


def _check_image_shape(shape: Shape, what: str) -> None:
    if len(shape) != 3 or any(d <= 0 for d in shape):
        raise ArchError(f"{what} expects a (channels, height, width) input, got {shape}")


def _conv_out_dim(size: int, stride: int, pad: int, what: str) -> int:
    out = (size + 2 * pad - KERNEL_SIZE) // stride + 1
    if out < 1:
        raise ArchError(f"{what}: spatial dim {size} collapses below 1 (stride {stride})")
    return out


@dataclass(frozen=True)
class Conv2d:
    """Standard 3x3 convolution, zero padding, stride 1 or 2."""

    in_ch: int
    out_ch: int
    stride: int = 1
    pad: int = 1
    kernel: int = KERNEL_SIZE

    def __post_init__(self):
        if self.kernel != KERNEL_SIZE:
            raise ArchError(f"Conv2d kernel is fixed at {KERNEL_SIZE}, got {self.kernel}")
        if self.stride not in (1, 2):
            raise ArchError(f"Conv2d stride must be 1 or 2, got {self.stride}")
        if self.pad < 0:
            raise ArchError(f"Conv2d pad must be >= 0, got {self.pad}")
        if self.in_ch < 1 or self.out_ch < 1:
            raise ArchError(f"Conv2d channels must be positive, got {self.in_ch}->{self.out_ch}")

    def out_shape(self, in_shape: Shape) -> Shape:
        _check_image_shape(in_shape, "Conv2d")
        c, h, w = in_shape
        if c != self.in_ch:
            raise ArchError(f"Conv2d expects {self.in_ch} input channels, got {c}")
        return (
            self.out_ch,
            _conv_out_dim(h, self.stride, self.pad, "Conv2d"),
            _conv_out_dim(w, self.stride, self.pad, "Conv2d"),
        )

    def param_count(self) -> int:
        return self.kernel * self.kernel * self.in_ch * self.out_ch + self.out_ch

    def macs(self, in_shape: Shape) -> int:
        _, oh, ow = self.out_shape(in_shape)
        return self.kernel * self.kernel * self.in_ch * self.out_ch * oh * ow

    def flops(self, in_shape: Shape) -> int:
        _, oh, ow = self.out_shape(in_shape)
        return 2 * self.macs(in_shape) + self.out_ch * oh * ow

    def describe(self) -> str:
        return f"Conv2d({self.in_ch}->{self.out_ch}, s{self.stride}, p{self.pad})"


@dataclass(frozen=True)
class DepthwiseConv2d:
    """Per-channel 3x3 convolution; never mixes channels."""

    channels: int
    stride: int = 1
    pad: int = 1
    kernel: int = KERNEL_SIZE

    def __post_init__(self):
        if self.kernel != KERNEL_SIZE:
            raise ArchError(
                f"DepthwiseConv2d kernel is fixed at {KERNEL_SIZE}, got {self.kernel}"
            )
        if self.stride not in (1, 2):
            raise ArchError(f"DepthwiseConv2d stride must be 1 or 2, got {self.stride}")
        if self.pad < 0:
            raise ArchError(f"DepthwiseConv2d pad must be >= 0, got {self.pad}")
        if self.channels < 1:
            raise ArchError(f"DepthwiseConv2d channels must be positive, got {self.channels}")

    def out_shape(self, in_shape: Shape) -> Shape:
        _check_image_shape(in_shape, "DepthwiseConv2d")
        c, h, w = in_shape
        if c != self.channels:
            raise ArchError(f"DepthwiseConv2d expects {self.channels} channels, got {c}")
        return (
            c,
            _conv_out_dim(h, self.stride, self.pad, "DepthwiseConv2d"),
            _conv_out_dim(w, self.stride, self.pad, "DepthwiseConv2d"),
        )

    def param_count(self) -> int:
        return self.kernel * self.kernel * self.channels + self.channels

    def macs(self, in_shape: Shape) -> int:
        _, oh, ow = self.out_shape(in_shape)
        return self.kernel * self.kernel * self.channels * oh * ow

    def flops(self, in_shape: Shape) -> int:
        _, oh, ow = self.out_shape(in_shape)
        return 2 * self.macs(in_shape) + self.channels * oh * ow

    def describe(self) -> str:
        return f"DepthwiseConv2d({self.channels}, s{self.stride}, p{self.pad})"


@dataclass(frozen=True)
class PointwiseConv2d:
    """1x1 convolution: mixes channels, preserves spatial dims."""

    in_ch: int
    out_ch: int

    def __post_init__(self):
        if self.in_ch < 1 or self.out_ch < 1:
            raise ArchError(
                f"PointwiseConv2d channels must be positive, got {self.in_ch}->{self.out_ch}"
            )

    def out_shape(self, in_shape: Shape) -> Shape:
        _check_image_shape(in_shape, "PointwiseConv2d")
        c, h, w = in_shape
        if c != self.in_ch:
            raise ArchError(f"PointwiseConv2d expects {self.in_ch} input channels, got {c}")
        return (self.out_ch, h, w)

    def param_count(self) -> int:
        return self.in_ch * self.out_ch + self.out_ch

    def macs(self, in_shape: Shape) -> int:
        _, h, w = in_shape
        return self.in_ch * self.out_ch * h * w

    def flops(self, in_shape: Shape) -> int:
        _, h, w = in_shape
        return 2 * self.macs(in_shape) + self.out_ch * h * w

    def describe(self) -> str:
        return f"PointwiseConv2d({self.in_ch}->{self.out_ch})"


@dataclass(frozen=True)
class Replicator:
    """Nearest-neighbor upsampling by an integer factor (no parameters)."""

    factor: int = 2

    def __post_init__(self):
        if self.factor < 2:
            raise ArchError(f"Replicator factor must be >= 2, got {self.factor}")

    def out_shape(self, in_shape: Shape) -> Shape:
        _check_image_shape(in_shape, "Replicator")
        c, h, w = in_shape
        return (c, h * self.factor, w * self.factor)

    def param_count(self) -> int:
        return 0

    def macs(self, in_shape: Shape) -> int:
        return 0

    def flops(self, in_shape: Shape) -> int:
        return 0

    def describe(self) -> str:
        return f"Replicator(x{self.factor})"


@dataclass(frozen=True)
class Dense:
    """Fully connected layer on flattened inputs."""

    in_dim: int
    out_dim: int

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ArchError(f"Dense dims must be positive, got {self.in_dim}->{self.out_dim}")

    def out_shape(self, in_shape: Shape) -> Shape:
        if len(in_shape) != 1:
            raise ArchError(f"Dense expects a flat input (after Flatten), got {in_shape}")
        if in_shape[0] != self.in_dim:
            raise ArchError(f"Dense expects {self.in_dim} inputs, got {in_shape[0]}")
        return (self.out_dim,)

    def param_count(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim

    def macs(self, in_shape: Shape) -> int:
        return self.in_dim * self.out_dim

    def flops(self, in_shape: Shape) -> int:
        return 2 * self.macs(in_shape) + self.out_dim

    def describe(self) -> str:
        return f"Dense({self.in_dim}->{self.out_dim})"


@dataclass(frozen=True)
class Activation:
    """Elementwise nonlinearity: relu, sigmoid, or linear (identity)."""

    fn: str = "relu"

    def __post_init__(self):
        if self.fn not in ACTIVATIONS:
            raise ArchError(f"activation must be one of {ACTIVATIONS}, got {self.fn!r}")

    def out_shape(self, in_shape: Shape) -> Shape:
        return in_shape

    def param_count(self) -> int:
        return 0

    def macs(self, in_shape: Shape) -> int:
        return 0

    def flops(self, in_shape: Shape) -> int:
        if self.fn == "linear":
            return 0
        return int(np.prod(in_shape))

    def describe(self) -> str:
        return f"Activation({self.fn})"


@dataclass(frozen=True)
class Flatten:
    """(C, H, W) -> (C*H*W,)."""

    def out_shape(self, in_shape: Shape) -> Shape:
        _check_image_shape(in_shape, "Flatten")
        return (int(np.prod(in_shape)),)

    def param_count(self) -> int:
        return 0

    def macs(self, in_shape: Shape) -> int:
        return 0

    def flops(self, in_shape: Shape) -> int:
        return 0

    def describe(self) -> str:
        return "Flatten()"


@dataclass(frozen=True)
class Reshape:
    """(N,) -> (channels, height, width) with N == channels*height*width."""

    channels: int
    height: int
    width: int

    def __post_init__(self):
        if min(self.channels, self.height, self.width) < 1:
            raise ArchError(
                f"Reshape dims must be positive, got "
                f"({self.channels}, {self.height}, {self.width})"
            )

    def out_shape(self, in_shape: Shape) -> Shape:
        if len(in_shape) != 1:
            raise ArchError(f"Reshape expects a flat input, got {in_shape}")
        n = self.channels * self.height * self.width
        if in_shape[0] != n:
            raise ArchError(
                f"Reshape to ({self.channels},{self.height},{self.width}) needs {n} "
                f"inputs, got {in_shape[0]}"
            )
        return (self.channels, self.height, self.width)

    def param_count(self) -> int:
        return 0

    def macs(self, in_shape: Shape) -> int:
        return 0

    def flops(self, in_shape: Shape) -> int:
        return 0

    def describe(self) -> str:
        return f"Reshape({self.channels},{self.height},{self.width})"


LayerKind = (
    Conv2d | DepthwiseConv2d | PointwiseConv2d | Replicator | Dense | Activation
    | Flatten | Reshape
)


# ---------------------------------------------------------------------------
# Runtime layers
# ---------------------------------------------------------------------------


class Param:
    """A trainable array with its gradient accumulator."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = data
        self.grad = np.zeros_like(data)


class _RuntimeLayer:
    """Base runtime layer: holds the kind, parameters, and forward cache."""

    def __init__(self, kind: LayerKind):
        self.kind = kind
        self._cache = None

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise ShapeError(
                f"{self.kind.describe()}: backward called without a training forward"
            )
        cache, self._cache = self._cache, None
        return cache


class _ConvLayer(_RuntimeLayer):
    def __init__(self, kind: Conv2d, dtype):
        super().__init__(kind)
        k = kind.kernel
        self.weight = Param(np.zeros((kind.out_ch, kind.in_ch, k, k), dtype=dtype))
        self.bias = Param(np.zeros(kind.out_ch, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def fan_in(self) -> int:
        return self.kind.in_ch * self.kind.kernel * self.kind.kernel

    def forward(self, x, training=False):
        if training:
            self._cache = x
        return kernels.get().conv2d_forward(
            x, self.weight.data, self.bias.data, self.kind.stride, self.kind.pad
        )

    def backward(self, gy):
        x = self._take_cache()
        gx, gw, gb = kernels.get().conv2d_backward(
            x, self.weight.data, self.bias.data, self.kind.stride, self.kind.pad, gy
        )
        self.weight.grad += gw
        self.bias.grad += gb
        return gx


class _DepthwiseLayer(_RuntimeLayer):
    def __init__(self, kind: DepthwiseConv2d, dtype):
        super().__init__(kind)
        k = kind.kernel
        self.weight = Param(np.zeros((kind.channels, k, k), dtype=dtype))
        self.bias = Param(np.zeros(kind.channels, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def fan_in(self) -> int:
        return self.kind.kernel * self.kind.kernel

    def forward(self, x, training=False):
        if training:
            self._cache = x
        return kernels.get().depthwise_forward(
            x, self.weight.data, self.bias.data, self.kind.stride, self.kind.pad
        )

    def backward(self, gy):
        x = self._take_cache()
        gx, gw, gb = kernels.get().depthwise_backward(
            x, self.weight.data, self.bias.data, self.kind.stride, self.kind.pad, gy
        )
        self.weight.grad += gw
        self.bias.grad += gb
        return gx


class _PointwiseLayer(_RuntimeLayer):
    def __init__(self, kind: PointwiseConv2d, dtype):
        super().__init__(kind)
        self.weight = Param(np.zeros((kind.out_ch, kind.in_ch), dtype=dtype))
        self.bias = Param(np.zeros(kind.out_ch, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def fan_in(self) -> int:
        return self.kind.in_ch

    def forward(self, x, training=False):
        if training:
            self._cache = x
        return kernels.get().pointwise_forward(x, self.weight.data, self.bias.data)

    def backward(self, gy):
        x = self._take_cache()
        gx, gw, gb = kernels.get().pointwise_backward(
            x, self.weight.data, self.bias.data, gy
        )
        self.weight.grad += gw
        self.bias.grad += gb
        return gx


class _ReplicatorLayer(_RuntimeLayer):
    def forward(self, x, training=False):
        return kernels.get().replicator_forward(x, self.kind.factor)

    def backward(self, gy):
        return kernels.get().replicator_backward(gy, self.kind.factor)


class _DenseLayer(_RuntimeLayer):
    def __init__(self, kind: Dense, dtype):
        super().__init__(kind)
        self.weight = Param(np.zeros((kind.out_dim, kind.in_dim), dtype=dtype))
        self.bias = Param(np.zeros(kind.out_dim, dtype=dtype))

    def params(self):
        return [self.weight, self.bias]

    def fan_in(self) -> int:
        return self.kind.in_dim

    def forward(self, x, training=False):
        if training:
            self._cache = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, gy):
        x = self._take_cache()
        self.weight.grad += gy.T @ x
        self.bias.grad += gy.sum(axis=0)
        return gy @ self.weight.data


class _ActivationLayer(_RuntimeLayer):
    def forward(self, x, training=False):
        if self.kind.fn == "relu":
            y = np.maximum(x, 0)
            if training:
                self._cache = x
            return y
        if self.kind.fn == "sigmoid":
            # Numerically stable split by sign.
            y = np.empty_like(x)
            pos = x >= 0
            y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
            ex = np.exp(x[~pos])
            y[~pos] = ex / (1.0 + ex)
            if training:
                self._cache = y
            return y
        if training:
            self._cache = True  # linear: nothing to remember
        return x

    def backward(self, gy):
        cache = self._take_cache()
        if self.kind.fn == "relu":
            return gy * (cache > 0)
        if self.kind.fn == "sigmoid":
            return gy * cache * (1.0 - cache)
        return gy


class _FlattenLayer(_RuntimeLayer):
    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(self._take_cache())


class _ReshapeLayer(_RuntimeLayer):
    def forward(self, x, training=False):
        if training:
            self._cache = x.shape
        return x.reshape(x.shape[0], self.kind.channels, self.kind.height, self.kind.width)

    def backward(self, gy):
        return gy.reshape(self._take_cache())


_RUNTIME = {
    Conv2d: _ConvLayer,
    DepthwiseConv2d: _DepthwiseLayer,
    PointwiseConv2d: _PointwiseLayer,
    Dense: _DenseLayer,
}
_STATELESS = {
    Replicator: _ReplicatorLayer,
    Activation: _ActivationLayer,
    Flatten: _FlattenLayer,
    Reshape: _ReshapeLayer,
}


def make_layer(kind: LayerKind, dtype=np.float32) -> _RuntimeLayer:
    """Instantiate the runtime layer for a kind (weights zeroed, not initialized)."""
    cls = _RUNTIME.get(type(kind))
    if cls is not None:
        return cls(kind, dtype)
    cls = _STATELESS.get(type(kind))
    if cls is not None:
        return cls(kind)
    raise ArchError(f"unknown layer kind {kind!r}")


def init_layer(layer: _RuntimeLayer, rng: np.random.Generator) -> None:
    """He-uniform weight init (bound sqrt(6 / fan_in)); biases stay zero."""
    if not layer.params():
        return
    bound = math.sqrt(6.0 / layer.fan_in())
    w = layer.weight
    w.data[...] = rng.uniform(-bound, bound, size=w.data.shape).astype(w.data.dtype)
