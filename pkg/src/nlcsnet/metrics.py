"""PSNR and SSIM for grayscale images in [0, peak]."""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd.tensor import DimensionError

PSNR_CAP_DB = 100.0


def _pair(a, b):
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak=1.0):
    """10 log10(peak^2 / MSE); identical inputs give +inf."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def capped_psnr(a, b, peak=1.0):
    return min(psnr(a, b, peak), PSNR_CAP_DB)


def gaussian_window(size=11, sigma=1.5):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img, g_rows, g_cols):
    img = sliding_window_view(img, len(g_rows), axis=0) @ g_rows
    return sliding_window_view(img, len(g_cols), axis=1) @ g_cols


def ssim(a, b, peak=1.0, window=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM over valid Gaussian-window positions.

    Images smaller than the window use a window truncated to the image size.
    """
    a, b = _pair(a, b)
    while a.ndim > 2 and a.shape[0] == 1:  # drop leading batch/channel axes
        a, b = a[0], b[0]
    if a.ndim != 2:
        raise DimensionError(f"ssim expects a single grayscale image, got shape {a.shape}")
    g_rows = gaussian_window(min(window, a.shape[0]), sigma)
    g_cols = gaussian_window(min(window, a.shape[1]), sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    mu1 = _filter_valid(a, g_rows, g_cols)
    mu2 = _filter_valid(b, g_rows, g_cols)
    s11 = _filter_valid(a * a, g_rows, g_cols) - mu1 * mu1
    s22 = _filter_valid(b * b, g_rows, g_cols) - mu2 * mu2
    s12 = _filter_valid(a * b, g_rows, g_cols) - mu1 * mu2
    num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))
