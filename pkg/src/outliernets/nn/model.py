"""Sequential model container with shape checking and flat weight vectors."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .layers import LayerKind, Param, init_layer, make_layer


class Sequential:
    """A chain of runtime layers with per-layer shape validation.

    The expected activation shape after each layer is computed once from the
    layer kinds; every forward checks the incoming tensor against it and
    raises :class:`ShapeError` naming the layer index and both shapes.
    """

    def __init__(self, kinds: list[LayerKind] | tuple[LayerKind, ...],
                 input_shape: tuple[int, int, int], dtype=np.float32):
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.layers = [make_layer(k, dtype=dtype) for k in kinds]
        shapes = [self.input_shape]
        for kind in kinds:
            shapes.append(kind.out_shape(shapes[-1]))
        self._shapes = shapes  # shapes[i] is the input shape of layer i

    # -- execution ----------------------------------------------------------

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(
                f"model input: expected (batch, *{self.input_shape}), got {tuple(x.shape)}"
            )
        for i, layer in enumerate(self.layers):
            if tuple(x.shape[1:]) != self._shapes[i]:
                raise ShapeError(
                    f"layer {i} ({layer.kind.describe()}): expected input shape "
                    f"{self._shapes[i]}, got {tuple(x.shape[1:])}"
                )
            x = layer.forward(x, training=training)
        return x

    def backward(self, gy: np.ndarray) -> np.ndarray:
        if tuple(gy.shape[1:]) != self._shapes[-1]:
            raise ShapeError(
                f"model gradient: expected (batch, *{self._shapes[-1]}), got {tuple(gy.shape)}"
            )
        for layer in reversed(self.layers):
            gy = layer.backward(gy)
        return gy

    # -- parameters ---------------------------------------------------------

    def params(self) -> list[Param]:
        out: list[Param] = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params())

    def zero_grads(self) -> None:
        for p in self.params():
            p.grad[...] = 0

    def init(self, seed: int | np.random.SeedSequence) -> None:
        """He-uniform init of all layers from one RNG stream, in layer order."""
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            init_layer(layer, rng)

    def param_vector(self) -> np.ndarray:
        """All parameters flattened to one float32 vector, in layer order
        (weights before bias within a layer)."""
        parts = [p.data.astype(np.float32, copy=False).ravel() for p in self.params()]
        if not parts:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate(parts)

    def load_param_vector(self, vec: np.ndarray) -> None:
        """Inverse of :meth:`param_vector`."""
        vec = np.asarray(vec)
        expected = self.param_count()
        if vec.ndim != 1 or vec.size != expected:
            raise ShapeError(
                f"parameter vector has {vec.size} entries, model needs {expected}"
            )
        offset = 0
        for p in self.params():
            n = p.data.size
            p.data[...] = vec[offset : offset + n].reshape(p.data.shape).astype(p.data.dtype)
            offset += n
