"""From-scratch neural-network core: layers, models, optimizer, kernels."""

from .kernels import active_backend, available_backends, get, set_backend
from .layers import (
    ACTIVATIONS,
    KERNEL_SIZE,
    Activation,
    Conv2d,
    Dense,
    DepthwiseConv2d,
    Flatten,
    LayerKind,
    Param,
    PointwiseConv2d,
    Replicator,
    Reshape,
    init_layer,
    make_layer,
)
from .loss import mse
from .model import Sequential
from .optim import Adam

__all__ = [
    "ACTIVATIONS",
    "KERNEL_SIZE",
    "Activation",
    "Adam",
    "Conv2d",
    "Dense",
    "DepthwiseConv2d",
    "Flatten",
    "LayerKind",
    "Param",
    "PointwiseConv2d",
    "Replicator",
    "Reshape",
    "Sequential",
    "active_backend",
    "available_backends",
    "get",
    "init_layer",
    "make_layer",
    "mse",
    "set_backend",
]
