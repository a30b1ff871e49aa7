import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from hqnoise.errors import DimensionError
from hqnoise.quality import (
    filter_pair,
    filtering_rate,
    format_rate,
    perceptual_score,
    psnr,
    ssim,
    ssim_proxy,
)


def _img(seed, shape=(3, 16, 16)):
    return np.random.default_rng(seed).uniform(0, 1, shape)


# psnr


def test_psnr_identical_is_inf():
    a = _img(0)
    assert psnr(a, a) == math.inf


def test_psnr_mse_one_max_255():
    gt = np.zeros((4, 4))
    pred = np.ones((4, 4))
    assert psnr(pred, gt, 255.0) == pytest.approx(48.1308, abs=5e-5)
    assert psnr(pred, gt, 255.0) == pytest.approx(20 * math.log10(255), abs=1e-12)


def test_psnr_mse_equals_max_squared():
    assert psnr(np.full(8, 2.0), np.zeros(8), 2.0) == pytest.approx(0.0, abs=1e-12)


def test_psnr_errors():
    with pytest.raises(DimensionError):
        psnr(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        psnr(np.zeros(3), np.ones(3), 0.0)


def test_psnr_decreases_with_noise_amplitude():
    gt = _img(1)
    noise = np.random.default_rng(2).standard_normal(gt.shape)
    values = [psnr(gt + a * noise, gt) for a in (0.001, 0.01, 0.05, 0.1, 0.5, 1.0)]
    assert all(x > y for x, y in zip(values, values[1:]))


# ssim


def test_ssim_identical():
    a = _img(3)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_closed_form():
    L = 1.0
    d = 1.0
    c1 = (0.01 * L) ** 2
    got = ssim(np.full((16, 16), d), np.zeros((16, 16)), L)
    assert got == pytest.approx(c1 / (d * d + c1), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_ssim_matches_skimage(seed):
    a = _img(seed, (16, 16))
    b = np.clip(a + 0.2 * np.random.default_rng(seed + 100).standard_normal(a.shape), 0, 1)
    ref = structural_similarity(
        a, b, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False
    )
    # skimage crops the same (win - 1) / 2 border before averaging
    assert ssim(a, b, 1.0) == pytest.approx(ref, abs=1e-10)


def test_ssim_multichannel_mean_over_channels():
    a, b = _img(4), _img(5)
    per = [ssim(a[c], b[c]) for c in range(3)]
    assert ssim(a, b) == pytest.approx(np.mean(per), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), scale=st.floats(0.01, 10.0))
def test_ssim_symmetric_and_bounded(seed, scale):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, 12, 12)) * scale
    b = rng.standard_normal((2, 12, 12)) * scale
    s = ssim(a, b, 4.0)
    assert abs(s - ssim(b, a, 4.0)) < 1e-12
    assert -1.0 <= s <= 1.0
    assert ssim(a, a, 4.0) == pytest.approx(1.0, abs=1e-12)


# perceptual score


def test_perceptual_identical_views():
    views = [_img(i) for i in range(3)]
    assert perceptual_score(views, views) == pytest.approx(0.0, abs=1e-12)


def test_perceptual_mean_of_views():
    fixed = iter([0.2, 0.4])
    assert perceptual_score([1, 2], [1, 2], distance=lambda p, g: next(fixed)) == pytest.approx(0.3)


def test_perceptual_proxy_definition():
    a, b = _img(6), _img(7)
    assert perceptual_score([a], [b]) == pytest.approx((1 - ssim(a, b)) / 2, abs=1e-15)
    assert ssim_proxy(a, b) == pytest.approx((1 - ssim(a, b)) / 2, abs=1e-15)


def test_perceptual_permutation_invariant():
    preds = [_img(i) for i in range(4)]
    gts = [_img(10 + i) for i in range(4)]
    perm = [2, 0, 3, 1]
    assert perceptual_score(preds, gts) == pytest.approx(
        perceptual_score([preds[i] for i in perm], [gts[i] for i in perm]), abs=1e-15
    )


def test_perceptual_errors():
    with pytest.raises(ValueError):
        perceptual_score([], [])
    with pytest.raises(ValueError):
        perceptual_score([_img(0)], [_img(0), _img(1)])


# filter


def test_filter_examples():
    assert filter_pair(0.5, 0.3, 0.0)
    assert not filter_pair(0.3, 0.3, 0.0)
    assert filter_pair(0.32, 0.3, 0.005)
    # exactly representable boundary: 0.75 == 0.5 + 0.25 is rejected
    assert not filter_pair(0.75, 0.5, 0.25)
    assert filter_pair(np.nextafter(0.75, 1.0), 0.5, 0.25)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(-1e6, 1e6, allow_nan=False))
def test_filter_no_self_retention(s):
    assert not filter_pair(s, s, 0.0)


def test_filtering_rate_examples():
    assert format_rate(359, 1765) == "20.34%"
    assert filtering_rate(359, 1765) == pytest.approx(20.3399, abs=1e-4)
    assert filtering_rate(0, 100) == 0.0
    assert filtering_rate(100, 100) == 100.0
    with pytest.raises(ValueError):
        filtering_rate(0, 0)
    with pytest.raises(ValueError):
        filtering_rate(5, 4)
