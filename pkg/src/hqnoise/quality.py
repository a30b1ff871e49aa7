"""PSNR, SSIM, a perceptual-distance proxy, and the noise-pair filter."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from hqnoise.errors import DimensionError

K1 = 0.01
K2 = 0.03
WINDOW = 11
WINDOW_SIGMA = 1.5


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(pred, gt, max_value=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    pred, gt = _same_shape(pred, gt)
    if max_value <= 0:
        raise ValueError("max_value must be positive")
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(max_value) - 10.0 * math.log10(mse)


def gaussian_window(size=WINDOW, sigma=WINDOW_SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x, g):
    """Separable correlation over the last two axes, keeping only full windows."""
    r = (g.size - 1) // 2
    y = correlate1d(x, g, axis=-1, mode="constant")
    y = correlate1d(y, g, axis=-2, mode="constant")
    return y[..., r : x.shape[-2] - r, r : x.shape[-1] - r]


def ssim_map(pred, gt, dynamic_range=1.0):
    pred, gt = _same_shape(pred, gt)
    if pred.ndim < 2 or min(pred.shape[-2:]) < WINDOW:
        raise ValueError(f"spatial dims {pred.shape[-2:]} smaller than the {WINDOW}-tap window")
    g = gaussian_window()
    c1 = (K1 * dynamic_range) ** 2
    c2 = (K2 * dynamic_range) ** 2
    mu_x = _filter_valid(pred, g)
    mu_y = _filter_valid(gt, g)
    sxx = _filter_valid(pred * pred, g) - mu_x**2
    syy = _filter_valid(gt * gt, g) - mu_y**2
    sxy = _filter_valid(pred * gt, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return num / den


def ssim(pred, gt, dynamic_range=1.0):
    """Mean SSIM (11-tap Gaussian window, sigma 1.5) over channels and positions."""
    return float(np.mean(ssim_map(pred, gt, dynamic_range)))


def ssim_proxy(pred, gt, dynamic_range=1.0):
    """Distance-like stand-in for LPIPS: ``(1 - SSIM) / 2`` in ``[0, 1]``."""
    return (1.0 - ssim(pred, gt, dynamic_range)) / 2.0


def perceptual_score(pred_views, gt_views, distance=None, dynamic_range=1.0):
    """Mean per-view distance over ``N`` paired views."""
    pred_views = list(pred_views)
    gt_views = list(gt_views)
    if not pred_views or len(pred_views) != len(gt_views):
        raise ValueError("need equal-length, non-empty view lists")
    if distance is None:
        return float(np.mean([ssim_proxy(p, g, dynamic_range) for p, g in zip(pred_views, gt_views)]))
    return float(np.mean([distance(p, g) for p, g in zip(pred_views, gt_views)]))


def filter_pair(s_rd, s_hq, m=0.0):
    """Keep a pair only if high-quality noise beats random noise by more than ``m``."""
    return s_rd > s_hq + m


def filtering_rate(retained, total):
    """Percentage of pairs retained."""
    if total <= 0:
        raise ValueError("total must be positive")
    if not 0 <= retained <= total:
        raise ValueError(f"retained={retained} outside 0..{total}")
    return 100.0 * retained / total


def format_rate(retained, total):
    return f"{filtering_rate(retained, total):.2f}%"
