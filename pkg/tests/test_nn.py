import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hqnoise.errors import DimensionError, TrainingError
from hqnoise.nn import (
    ELU,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    MaxPool2d,
    Parameter,
    PixelShuffle,
    ReLU,
    Sequential,
    activation,
    adam_step,
    conv2d,
    pixel_shuffle,
    pixel_unshuffle,
)
from hqnoise.nn.gradcheck import numerical_gradient, relative_error
from hqnoise.nn.optim import Adam, step_decay_lr


def _check_layer(layer, x, rng, tol=1e-6):
    """Compare input and parameter gradients of ``sum(w * layer(x))`` with FD."""
    w = rng.standard_normal(layer.forward(x).shape)

    def loss():
        return float(np.sum(w * layer.forward(x)))

    loss()
    for p in layer.parameters():
        p.zero_grad()
    dx = layer.backward(w)
    assert relative_error(dx, numerical_gradient(loss, x)) < tol
    for p in layer.parameters():
        analytic = p.grad.copy()
        assert relative_error(analytic, numerical_gradient(loss, p.value)) < tol


# conv2d


def test_conv_identity_kernel():
    x = np.arange(9.0).reshape(1, 3, 3)
    out = conv2d(x, np.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(out, x)


def test_conv_hand_example():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    out = conv2d(x, np.ones((1, 1, 2, 2)))
    assert out.shape == (1, 1, 1)
    assert out[0, 0, 0] == 10.0


@pytest.mark.parametrize("h,k,s,p", [(7, 3, 1, 1), (8, 3, 2, 1), (9, 2, 2, 0), (5, 5, 1, 2), (6, 1, 3, 0)])
def test_conv_output_size(h, k, s, p):
    x = np.zeros((2, 3, h, h))
    out = conv2d(x, np.zeros((4, 3, k, k)), stride=s, padding=p)
    assert out.shape == (2, 4, (h + 2 * p - k) // s + 1, (h + 2 * p - k) // s + 1)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 6, 6))
    k = rng.standard_normal((3, 2, 3, 3))
    out = conv2d(x, k, stride=2, padding=1)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(out)
    for o in range(3):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                ref[o, i, j] = np.sum(xp[:, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3] * k[o])
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_conv_shape_errors():
    with pytest.raises(DimensionError, match="channel"):
        conv2d(np.zeros((2, 4, 4)), np.zeros((1, 3, 3, 3)))
    with pytest.raises(DimensionError, match="larger"):
        conv2d(np.zeros((1, 2, 2)), np.zeros((1, 1, 3, 3)))


def test_conv_linearity():
    rng = np.random.default_rng(0)
    k = rng.standard_normal((3, 2, 3, 3))
    x, y = rng.standard_normal((2, 2, 8, 8))
    a, b = 1.7, -0.3
    lhs = conv2d(a * x + b * y, k, padding=1)
    rhs = a * conv2d(x, k, padding=1) + b * conv2d(y, k, padding=1)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@pytest.mark.parametrize("k,s,p,h", [(3, 1, 1, 6), (3, 2, 1, 8), (3, 2, 1, 7), (1, 1, 0, 5), (2, 2, 0, 6), (3, 1, 0, 5)])
def test_conv_gradients(k, s, p, h):
    rng = np.random.default_rng(k * 10 + s + p)
    layer = Conv2d(3, 2, k, stride=s, padding=p, rng=rng)
    layer.bias.value = rng.standard_normal(2)
    _check_layer(layer, rng.standard_normal((2, 3, h, h)), rng)


def test_conv_transpose_gradients_and_shape():
    rng = np.random.default_rng(1)
    layer = ConvTranspose2d(4, 2, 2, stride=2, rng=rng)
    x = rng.standard_normal((2, 4, 3, 3))
    assert layer.forward(x).shape == (2, 2, 6, 6)
    _check_layer(layer, x, rng)


# activations, pooling, batch norm


def test_activation_examples():
    assert activation(np.array(-1.0)) == 0.0
    assert activation(np.array(2.0)) == 2.0
    assert activation(np.array(0.0), "elu") == 0.0
    assert activation(np.array(-1.0), "elu") == pytest.approx(math.exp(-1) - 1, abs=1e-12)
    assert activation(np.array(-1.0), "elu") == pytest.approx(-0.63212, abs=1e-5)


def test_activation_unknown():
    with pytest.raises(ValueError):
        activation(np.zeros(2), "gelu")


@pytest.mark.parametrize("layer", [ReLU(), ELU(), ELU(alpha=0.5)])
def test_activation_gradients(layer):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((2, 3, 4, 4))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    _check_layer(layer, x, rng)


def test_maxpool_forward_and_gradient():
    x = np.arange(16.0).reshape(1, 1, 4, 4)
    out = MaxPool2d().forward(x)
    np.testing.assert_array_equal(out[0, 0], [[5, 7], [13, 15]])
    rng = np.random.default_rng(5)
    _check_layer(MaxPool2d(), rng.standard_normal((2, 3, 4, 4)), rng)


def test_maxpool_indivisible():
    with pytest.raises(DimensionError):
        MaxPool2d().forward(np.zeros((1, 1, 3, 4)))


def test_batchnorm_train_statistics():
    rng = np.random.default_rng(6)
    bn = BatchNorm2d(3)
    x = 3.0 + 2.0 * rng.standard_normal((4, 3, 5, 5))
    out = bn.forward(x)
    np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, rtol=1e-3)
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=(0, 2, 3)))


@pytest.mark.parametrize("training", [True, False])
def test_batchnorm_gradients(training):
    rng = np.random.default_rng(7)
    bn = BatchNorm2d(3)
    bn.gamma.value = rng.uniform(0.5, 1.5, 3)
    bn.beta.value = rng.standard_normal(3)
    bn.running_mean[:] = rng.standard_normal(3)
    bn.running_var[:] = rng.uniform(0.5, 2.0, 3)
    bn.train(training)
    momentum = bn.momentum
    bn.momentum = 0.0  # keep running stats fixed across FD evaluations
    _check_layer(bn, rng.standard_normal((2, 3, 4, 4)), rng)
    bn.momentum = momentum


def test_sequential_gradients():
    rng = np.random.default_rng(8)
    net = Sequential(Conv2d(2, 4, 3, padding=1, rng=rng), ELU(), PixelShuffle(2), Conv2d(1, 2, 3, padding=1, rng=rng))
    _check_layer(net, rng.standard_normal((2, 2, 3, 3)), rng)


# pixel shuffle


def test_pixel_shuffle_identity_r1():
    x = np.random.default_rng(0).standard_normal((3, 4, 5))
    np.testing.assert_array_equal(pixel_shuffle(x, 1), x)


def test_pixel_shuffle_index_example():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    out = pixel_shuffle(np.array([a, b, c, d]).reshape(4, 1, 1), 2)
    np.testing.assert_array_equal(out, [[[a, b], [c, d]]])


def test_pixel_shuffle_shape_and_values():
    x = np.random.default_rng(1).standard_normal((8, 2, 2))
    out = pixel_shuffle(x, 2)
    assert out.shape == (2, 4, 4)
    np.testing.assert_array_equal(np.sort(out.ravel()), np.sort(x.ravel()))


def test_pixel_shuffle_index_formula():
    r, c, h, w = 3, 2, 2, 3
    x = np.random.default_rng(2).standard_normal((c * r * r, h, w))
    out = pixel_shuffle(x, r)
    for ci in range(c):
        for hh in range(h):
            for ww in range(w):
                for dy in range(r):
                    for dx in range(r):
                        assert out[ci, r * hh + dy, r * ww + dx] == x[ci * r * r + dy * r + dx, hh, ww]


def test_pixel_shuffle_indivisible():
    with pytest.raises(DimensionError):
        pixel_shuffle(np.zeros((6, 2, 2)), 2)


@settings(max_examples=40, deadline=None)
@given(c=st.integers(1, 3), r=st.integers(1, 3), h=st.integers(1, 4), w=st.integers(1, 4), seed=st.integers(0, 2**16))
def test_pixel_shuffle_roundtrip(c, r, h, w, seed):
    x = np.random.default_rng(seed).standard_normal((2, c * r * r, h, w))
    y = pixel_shuffle(x, r)
    assert y.sum() == pytest.approx(x.sum())
    np.testing.assert_array_equal(pixel_unshuffle(y, r), x)


# Adam


def test_adam_zero_gradient_unchanged():
    p = Parameter(np.array([1.5, -2.0]))
    adam_step(p, 1e-3, step=1)
    np.testing.assert_array_equal(p.value, [1.5, -2.0])


def test_adam_one_step_example():
    p = Parameter(np.array(0.0))
    p.grad[...] = 2.0
    adam_step(p, 0.001, 0.9, 0.999, 1e-8, 1)
    # m_hat = 2, v_hat = 4 -> update = 0.001 * 2 / (2 + 1e-8)
    assert float(p.value) == pytest.approx(-0.001, rel=1e-7)


def test_adam_monotone_against_gradient():
    p = Parameter(np.array([0.0, 0.0]))
    opt = Adam([p], lr=0.01)
    history = [p.value.copy()]
    for _ in range(2):
        p.grad[...] = [3.0, -1.0]
        opt.step()
        opt.zero_grad()
        history.append(p.value.copy())
    assert history[2][0] < history[1][0] < history[0][0]
    assert history[2][1] > history[1][1] > history[0][1]


def test_adam_nonfinite_gradient():
    p = Parameter(np.zeros(3))
    p.grad[1] = np.nan
    with pytest.raises(TrainingError):
        adam_step(p, 1e-3)
    with pytest.raises(ValueError):
        adam_step(Parameter(np.zeros(1)), 1e-3, step=0)


def test_step_decay():
    assert step_decay_lr(3e-4, 0) == 3e-4
    assert step_decay_lr(3e-4, 199) == 3e-4
    assert step_decay_lr(3e-4, 201) == pytest.approx(0.00024, abs=1e-15)
    assert step_decay_lr(3e-4, 400) == pytest.approx(0.000192, abs=1e-15)


def test_parameter_shapes_consistent():
    layer = Conv2d(3, 5, 3)
    for p in layer.parameters():
        assert p.value.shape == p.grad.shape == p.m.shape == p.v.shape
