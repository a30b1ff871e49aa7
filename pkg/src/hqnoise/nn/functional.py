"""Stateless forward/backward kernels for the fixed layer set.

Every kernel works on batched ``(N, C, H, W)`` float64 arrays. Forward
functions return ``(output, cache)``; the matching backward consumes the
cache and an upstream gradient.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from hqnoise.errors import DimensionError


def _check_4d(x: np.ndarray, name: str) -> None:
    if x.ndim != 4:
        raise DimensionError(f"{name} must be (N, C, H, W), got shape {x.shape}")


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_forward(x, weight, bias=None, stride=1, padding=0):
    _check_4d(x, "input")
    if weight.ndim != 4:
        raise DimensionError(f"kernel must be (O, C, k, k), got shape {weight.shape}")
    if stride < 1:
        raise DimensionError(f"stride must be >= 1, got {stride}")
    n, c, h, w = x.shape
    o, c_k, kh, kw = weight.shape
    if c_k != c:
        raise DimensionError(f"channel axis mismatch: input C={c} vs kernel C={c_k}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}"
        )
    xp = _pad(x, padding)
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.reshape(o, -1)
    out = (cols @ wmat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out), (x.shape, xp.shape, cols, weight, stride, padding)


def conv2d_backward(grad, cache):
    x_shape, xp_shape, cols, weight, stride, padding = cache
    o, c, kh, kw = weight.shape
    n, _, ho, wo = grad.shape
    h, w = x_shape[2], x_shape[3]
    gmat = grad.transpose(0, 2, 3, 1).reshape(-1, o)
    dweight = (gmat.T @ cols).reshape(weight.shape)
    dbias = gmat.sum(axis=0)
    # input gradient: full correlation of the (dilated) upstream gradient
    # with the flipped, channel-swapped kernel
    if stride > 1:
        dil = np.zeros((n, o, (ho - 1) * stride + 1, (wo - 1) * stride + 1))
        dil[:, :, ::stride, ::stride] = grad
    else:
        dil = grad
    ph, pw = kh - 1 - padding, kw - 1 - padding
    rh = (h + 2 * padding - kh) % stride
    rw = (w + 2 * padding - kw) % stride
    if ph < 0 or pw < 0:
        raise DimensionError("padding larger than kernel - 1 is not supported")
    gp = np.pad(dil, ((0, 0), (0, 0), (ph, ph + rh), (pw, pw + rw)))
    flipped = weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    dx, _ = conv2d_forward(gp, np.ascontiguousarray(flipped))
    return dx, dweight, dbias


def conv_transpose2d_forward(x, weight, bias=None, stride=2, padding=0):
    """Transposed convolution; ``weight`` is laid out ``(C_in, C_out, k, k)``."""
    _check_4d(x, "input")
    n, c, h, w = x.shape
    c_k, o, kh, kw = weight.shape
    if c_k != c:
        raise DimensionError(f"channel axis mismatch: input C={c} vs kernel C_in={c_k}")
    hf = (h - 1) * stride + kh
    wf = (w - 1) * stride + kw
    full = np.zeros((n, o, hf, wf))
    for i in range(kh):
        for j in range(kw):
            full[:, :, i : i + stride * h : stride, j : j + stride * w : stride] += np.einsum(
                "nchw,co->nohw", x, weight[:, :, i, j], optimize=True
            )
    out = full[:, :, padding : hf - padding, padding : wf - padding]
    if bias is not None:
        out = out + bias[None, :, None, None]
    return out, (x, weight, stride, padding, hf, wf)


def conv_transpose2d_backward(grad, cache):
    x, weight, stride, padding, hf, wf = cache
    _, _, h, w = x.shape
    _, _, kh, kw = weight.shape
    gfull = np.zeros(grad.shape[:2] + (hf, wf))
    gfull[:, :, padding : hf - padding, padding : wf - padding] = grad
    dx = np.zeros_like(x)
    dweight = np.zeros_like(weight)
    for i in range(kh):
        for j in range(kw):
            g = gfull[:, :, i : i + stride * h : stride, j : j + stride * w : stride]
            dx += np.einsum("nohw,co->nchw", g, weight[:, :, i, j], optimize=True)
            dweight[:, :, i, j] = np.einsum("nchw,nohw->co", x, g, optimize=True)
    dbias = grad.sum(axis=(0, 2, 3))
    return dx, dweight, dbias


def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(grad, mask):
    return grad * mask


def elu_forward(x, alpha=1.0):
    neg = alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x >= 0, x, neg)
    return out, (x, neg, alpha)


def elu_backward(grad, cache):
    x, neg, alpha = cache
    return grad * np.where(x >= 0, 1.0, neg + alpha)


def maxpool2d_forward(x, size=2):
    _check_4d(x, "input")
    n, c, h, w = x.shape
    if h % size or w % size:
        raise DimensionError(f"spatial dims {h}x{w} not divisible by pool size {size}")
    blocks = x.reshape(n, c, h // size, size, w // size, size).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h // size, w // size, size * size)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx, size)


def maxpool2d_backward(grad, cache):
    shape, idx, size = cache
    n, c, h, w = shape
    flat = np.zeros((n, c, h // size, w // size, size * size))
    np.put_along_axis(flat, idx[..., None], grad[..., None], axis=-1)
    blocks = flat.reshape(n, c, h // size, w // size, size, size).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(shape)


def batchnorm_forward(x, gamma, beta, eps=1e-5):
    """Normalize with the batch's own per-channel statistics (biased variance)."""
    mean = x.mean(axis=(0, 2, 3))
    var = x.var(axis=(0, 2, 3))
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, inv, gamma, mean, var)


def batchnorm_backward(grad, cache):
    xhat, inv, gamma, _, _ = cache
    m = grad.shape[0] * grad.shape[2] * grad.shape[3]
    dbeta = grad.sum(axis=(0, 2, 3))
    dgamma = (grad * xhat).sum(axis=(0, 2, 3))
    dxhat = grad * gamma[None, :, None, None]
    dx = (
        inv[None, :, None, None]
        / m
        * (
            m * dxhat
            - dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
            - xhat * (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        )
    )
    return dx, dgamma, dbeta


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange ``(..., C*r*r, H, W)`` into ``(..., C, r*H, r*W)``.

    Output element ``(c, r*h + dy, r*w + dx)`` is input element
    ``(c*r*r + dy*r + dx, h, w)``.
    """
    if r < 1:
        raise DimensionError(f"upscale factor must be >= 1, got {r}")
    *lead, ch, h, w = x.shape
    if ch % (r * r):
        raise DimensionError(f"channel count {ch} not divisible by r^2={r * r}")
    c = ch // (r * r)
    y = x.reshape(*lead, c, r, r, h, w)
    nl = len(lead)
    perm = list(range(nl)) + [nl, nl + 3, nl + 1, nl + 4, nl + 2]
    return y.transpose(perm).reshape(*lead, c, h * r, w * r)


def pixel_unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Inverse of :func:`pixel_shuffle`."""
    *lead, c, hr, wr = x.shape
    if hr % r or wr % r:
        raise DimensionError(f"spatial dims {hr}x{wr} not divisible by r={r}")
    h, w = hr // r, wr // r
    y = x.reshape(*lead, c, h, r, w, r)
    nl = len(lead)
    perm = list(range(nl)) + [nl, nl + 2, nl + 4, nl + 1, nl + 3]
    return y.transpose(perm).reshape(*lead, c * r * r, h, w)
