"""Minimal float64 layer set with hand-written backward passes."""

import numpy as np

from hqnoise.errors import DimensionError
from hqnoise.nn import functional
from hqnoise.nn.functional import pixel_shuffle, pixel_unshuffle
from hqnoise.nn.layers import (
    ELU,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    MaxPool2d,
    Module,
    Parameter,
    PixelShuffle,
    ReLU,
    Sequential,
)
from hqnoise.nn.optim import Adam, adam_step, step_decay_lr


def conv2d(x, kernel, stride=1, padding=0, bias=None):
    """Convolve a ``(C, H, W)`` or ``(N, C, H, W)`` input with an ``(O, C, k, k)`` kernel."""
    x = np.asarray(x, dtype=np.float64)
    kernel = kernel.value if isinstance(kernel, Parameter) else np.asarray(kernel, dtype=np.float64)
    single = x.ndim == 3
    if single:
        x = x[None]
    out, _ = functional.conv2d_forward(x, kernel, bias, stride, padding)
    return out[0] if single else out


def activation(x, kind="relu"):
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "elu":
        return functional.elu_forward(np.asarray(x, dtype=np.float64))[0]
    raise ValueError(f"unknown activation {kind!r}")


__all__ = [
    "Adam",
    "BatchNorm2d",
    "Conv2d",
    "ConvTranspose2d",
    "DimensionError",
    "ELU",
    "MaxPool2d",
    "Module",
    "Parameter",
    "PixelShuffle",
    "ReLU",
    "Sequential",
    "activation",
    "adam_step",
    "conv2d",
    "functional",
    "pixel_shuffle",
    "pixel_unshuffle",
    "step_decay_lr",
]
