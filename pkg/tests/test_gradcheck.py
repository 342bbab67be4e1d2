"""Central finite-difference verification of every hand-written backward.

Method: for a random layer and input, compare the analytic gradient of
loss = sum(forward(x) * projection) against (f(p + h) - f(p - h)) / (2h)
for every parameter tensor and the input, in double precision with
h = 1e-5, requiring norm-based relative error < 1e-4. Twenty random
tensors per layer kind. ReLU inputs are sampled away from the kink.
"""
from __future__ import annotations

import zlib

import numpy as np
import pytest

from outliernets.nn import (
    Activation,
    Adam,
    Conv2d,
    Dense,
    DepthwiseConv2d,
    Flatten,
    PointwiseConv2d,
    Replicator,
    Reshape,
    Sequential,
    mse,
)
from outliernets.nn.layers import Param, init_layer, make_layer

H = 1e-5
TOL = 1e-4
N_TRIALS = 20


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_layer(kind, in_shape, rng, avoid_kink=False):
    """FD-check d(sum(y*proj))/d(input) and d/d(params) for one layer."""
    layer = make_layer(kind, dtype=np.float64)
    init_layer(layer, rng)
    for p in layer.params():
        p.data[:] = rng.normal(0, 0.5, p.data.shape)
    x = rng.normal(0, 1.0, (2, *in_shape))
    if avoid_kink:
        x = np.sign(x) * (np.abs(x) + 0.05)
    proj = rng.normal(size=layer.forward(x).shape)

    def loss_fn():
        return float(np.sum(layer.forward(x) * proj))

    # Analytic gradients.
    layer.forward(x, training=True)
    for p in layer.params():
        p.grad[:] = 0.0
    gx = layer.backward(proj.copy())

    # FD input gradient.
    num_gx = np.zeros_like(x)
    flat = x.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + H
        up = loss_fn()
        flat[i] = orig - H
        down = loss_fn()
        flat[i] = orig
        num_gx.ravel()[i] = (up - down) / (2 * H)
    assert rel_err(gx, num_gx) < TOL, f"{kind}: input grad mismatch"

    # FD parameter gradients.
    for p in layer.params():
        num = np.zeros_like(p.data)
        pf = p.data.ravel()
        for i in range(pf.size):
            orig = pf[i]
            pf[i] = orig + H
            up = loss_fn()
            pf[i] = orig - H
            down = loss_fn()
            pf[i] = orig
            num.ravel()[i] = (up - down) / (2 * H)
        assert rel_err(p.grad, num) < TOL, f"{kind}: param grad mismatch"


CASES = [
    (Conv2d(2, 3, stride=1, pad=1), (2, 5, 6), False),
    (Conv2d(2, 3, stride=2, pad=1), (2, 5, 6), False),
    (Conv2d(2, 2, stride=1, pad=0), (2, 5, 5), False),
    (Conv2d(1, 2, stride=2, pad=0), (1, 6, 7), False),
    (DepthwiseConv2d(3, stride=1, pad=1), (3, 5, 6), False),
    (DepthwiseConv2d(3, stride=2, pad=1), (3, 6, 6), False),
    (DepthwiseConv2d(2, stride=2, pad=0), (2, 7, 5), False),
    (PointwiseConv2d(3, 4), (3, 4, 5), False),
    (Replicator(2), (2, 3, 4), False),
    (Dense(10, 4), (10,), False),
    (Activation("relu"), (3, 4, 4), True),
    (Activation("sigmoid"), (3, 4, 4), False),
    (Activation("linear"), (3, 4, 4), False),
    (Flatten(), (2, 3, 4), False),
    (Reshape(2, 3, 4), (24,), False),
]


@pytest.mark.parametrize("kind,in_shape,avoid_kink", CASES,
                         ids=[str(c[0]) for c in CASES])
def test_layer_gradients_match_finite_differences(kind, in_shape, avoid_kink):
    rng = np.random.default_rng(zlib.crc32(str(kind).encode()))
    for _ in range(N_TRIALS):
        check_layer(kind, in_shape, rng, avoid_kink=avoid_kink)


def test_full_model_gradient_through_mse():
    """End-to-end: autoencoder-shaped stack + MSE, FD on every parameter."""
    rng = np.random.default_rng(99)
    layers = (
        DepthwiseConv2d(1, stride=2, pad=1),
        Activation("relu"),
        PointwiseConv2d(1, 2),
        Activation("relu"),
        Replicator(2),
        DepthwiseConv2d(2, stride=1, pad=1),
        Activation("relu"),
        PointwiseConv2d(2, 1),
        Activation("linear"),
    )
    model = Sequential(layers, input_shape=(1, 6, 8), dtype=np.float64)
    model.init(3)
    for p in model.params():
        p.data[:] = rng.normal(0, 0.5, p.data.shape)
    x = rng.normal(size=(2, 1, 6, 8))
    target = rng.normal(size=(2, 1, 6, 8))

    def loss_fn():
        return mse(model.forward(x), target)[0]

    pred = model.forward(x, training=True)
    _, grad = mse(pred, target)
    model.zero_grads()
    model.backward(grad)

    for p in model.params():
        num = np.zeros_like(p.data)
        pf = p.data.ravel()
        for i in range(pf.size):
            orig = pf[i]
            pf[i] = orig + H
            up = loss_fn()
            pf[i] = orig - H
            down = loss_fn()
            pf[i] = orig
            num.ravel()[i] = (up - down) / (2 * H)
        assert rel_err(p.grad, num) < TOL


# ------------------------------------------------------------------- loss

def test_mse_value_and_grad(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4))
    loss, grad = mse(a, b)
    assert loss == pytest.approx(np.mean((a - b) ** 2), rel=1e-12)
    np.testing.assert_allclose(grad, 2 * (a - b) / a.size, rtol=1e-12)
    with pytest.raises(ValueError):
        mse(a, b[:2])


def test_mse_zero_for_identical_inputs(rng):
    a = rng.normal(size=(5, 5))
    loss, grad = mse(a, a.copy())
    assert loss == 0.0
    assert np.all(grad == 0.0)


# ------------------------------------------------------------------- Adam

def test_adam_first_step_is_lr_times_sign():
    p = Param(np.array([1.0, -2.0], dtype=np.float64))
    opt = Adam([p], lr=1e-3)
    p.grad[:] = np.array([0.5, -0.25])
    opt.step()
    # With zero moments, first step ~= lr * sign(g) (eps-corrected).
    np.testing.assert_allclose(p.data, [1.0 - 1e-3, -2.0 + 1e-3], atol=1e-8)


def test_adam_zero_grad_no_move():
    p = Param(np.array([1.5], dtype=np.float64))
    opt = Adam([p])
    p.grad[:] = 0.0
    opt.step()
    assert p.data[0] == 1.5


def test_adam_zeroes_grads_after_step():
    p = Param(np.array([1.0], dtype=np.float64))
    opt = Adam([p])
    p.grad[:] = 3.0
    opt.step()
    assert np.all(p.grad == 0.0)


def test_adam_validates_hyperparams():
    p = Param(np.zeros(1))
    with pytest.raises(ValueError):
        Adam([p], lr=0.0)
    with pytest.raises(ValueError):
        Adam([p], beta1=1.0)


def test_identical_training_is_bitwise_deterministic(rng):
    def run():
        model = Sequential(
            (Conv2d(1, 2, stride=1, pad=1), Activation("relu"),
             Conv2d(2, 1, stride=1, pad=1), Activation("linear")),
            input_shape=(1, 6, 6), dtype=np.float32,
        )
        model.init(5)
        opt = Adam(model.params(), lr=1e-3)
        data_rng = np.random.default_rng(17)
        for _ in range(10):
            x = data_rng.normal(size=(4, 1, 6, 6)).astype(np.float32)
            pred = model.forward(x, training=True)
            _, grad = mse(pred, x)
            model.zero_grads()
            model.backward(grad)
            opt.step()
        return model.param_vector()

    np.testing.assert_array_equal(run(), run())
