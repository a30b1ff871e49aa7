"""Trainable layers built on :mod:`hqnoise.nn.functional`.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Parameter.grad`` during ``backward``.
A layer therefore supports one outstanding forward at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from hqnoise.nn import functional as F


@dataclass(eq=False)
class Parameter:
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


class Module:
    training = True

    def parameters(self) -> Iterator[Parameter]:
        """Yield parameters in declaration order, depth first."""
        for value in vars(self).values():
            if isinstance(value, Parameter):
                yield value
            elif isinstance(value, Module):
                yield from value.parameters()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.parameters()

    def buffers(self) -> Iterator[np.ndarray]:
        """Non-trainable persistent arrays (running statistics)."""
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.buffers()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.buffers()

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True):
        for mod in self.modules():
            mod.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, x):
        return self.forward(x)


def _kaiming(rng, shape, fan_in):
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel_size, stride=1, padding=0, bias=True, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        fan_in = in_ch * kernel_size * kernel_size
        self.weight = Parameter(_kaiming(rng, (out_ch, in_ch, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(np.zeros(out_ch)) if bias else None
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        b = None if self.bias is None else self.bias.value
        out, self._cache = F.conv2d_forward(x, self.weight.value, b, self.stride, self.padding)
        return out

    def backward(self, grad):
        dx, dw, db = F.conv2d_backward(grad, self._cache)
        self.weight.grad += dw
        if self.bias is not None:
            self.bias.grad += db
        return dx


class ConvTranspose2d(Module):
    def __init__(self, in_ch, out_ch, kernel_size=2, stride=2, padding=0, bias=True, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        fan_in = in_ch * kernel_size * kernel_size // (stride * stride)
        self.weight = Parameter(
            _kaiming(rng, (in_ch, out_ch, kernel_size, kernel_size), max(fan_in, 1))
        )
        self.bias = Parameter(np.zeros(out_ch)) if bias else None
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        b = None if self.bias is None else self.bias.value
        out, self._cache = F.conv_transpose2d_forward(
            x, self.weight.value, b, self.stride, self.padding
        )
        return out

    def backward(self, grad):
        dx, dw, db = F.conv_transpose2d_backward(grad, self._cache)
        self.weight.grad += dw
        if self.bias is not None:
            self.bias.grad += db
        return dx


class BatchNorm2d(Module):
    """Per-channel affine normalization.

    Training mode normalizes with batch statistics and updates the running
    estimates with ``momentum``; eval mode uses the running estimates.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def buffers(self):
        yield self.running_mean
        yield self.running_var

    def forward(self, x):
        if self.training:
            out, self._cache = F.batchnorm_forward(x, self.gamma.value, self.beta.value, self.eps)
            _, _, _, mean, var = self._cache
            m = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = var * m / max(m - 1, 1)
            self.running_mean *= 1.0 - self.momentum
            self.running_mean += self.momentum * mean
            self.running_var *= 1.0 - self.momentum
            self.running_var += self.momentum * unbiased
            return out
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        xhat = (x - self.running_mean[None, :, None, None]) * inv[None, :, None, None]
        self._cache = xhat
        return self.gamma.value[None, :, None, None] * xhat + self.beta.value[None, :, None, None]

    def backward(self, grad):
        if not self.training:
            xhat = self._cache
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            self.gamma.grad += (grad * xhat).sum(axis=(0, 2, 3))
            self.beta.grad += grad.sum(axis=(0, 2, 3))
            return grad * (self.gamma.value * inv)[None, :, None, None]
        dx, dgamma, dbeta = F.batchnorm_backward(grad, self._cache)
        self.gamma.grad += dgamma
        self.beta.grad += dbeta
        return dx


class ReLU(Module):
    def forward(self, x):
        out, self._mask = F.relu_forward(x)
        return out

    def backward(self, grad):
        return F.relu_backward(grad, self._mask)


class ELU(Module):
    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def forward(self, x):
        out, self._cache = F.elu_forward(x, self.alpha)
        return out

    def backward(self, grad):
        return F.elu_backward(grad, self._cache)


class MaxPool2d(Module):
    def __init__(self, size=2):
        self.size = size

    def forward(self, x):
        out, self._cache = F.maxpool2d_forward(x, self.size)
        return out

    def backward(self, grad):
        return F.maxpool2d_backward(grad, self._cache)


class PixelShuffle(Module):
    def __init__(self, r):
        self.r = r

    def forward(self, x):
        return F.pixel_shuffle(x, self.r)

    def backward(self, grad):
        return F.pixel_unshuffle(grad, self.r)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad
