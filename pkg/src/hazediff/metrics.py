"""Distortion metrics and grayscale information statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

N_BINS = 256
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03


def to_gray(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.shape[-1] == 1:
        return img[..., 0]
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _check_range(img):
    if np.any(img < 0) or np.any(img > 1):
        raise ValueError("image values must lie in [0, 1]")


def psnr(a, b) -> float:
    """Peak-1 PSNR in dB; returns math.inf for identical images."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(x, win):
    return np.einsum("ijkl,kl->ij", sliding_window_view(x, win.shape), win)


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM of the luma channels over all fully-covered 11x11 Gaussian windows."""
    x, y = to_gray(a), to_gray(b)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape) < SSIM_WIN:
        raise ValueError(f"images must be at least {SSIM_WIN}x{SSIM_WIN} for SSIM")
    win = _gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter_valid(x, win), _filter_valid(y, win)
    sxx = _filter_valid(x * x, win) - mx * mx
    syy = _filter_valid(y * y, win) - my * my
    sxy = _filter_valid(x * y, win) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def gray_histogram(img) -> np.ndarray:
    """256-bin counts of luma over [0, 1]; bin k covers [k/256, (k+1)/256)."""
    g = to_gray(img)
    _check_range(g)
    # the luma weights sum to 1 - 1ulp; the nudge keeps grey levels on their own bin
    idx = np.clip(np.floor(g * N_BINS + 1e-9), 0, N_BINS - 1).astype(np.int64)
    return np.bincount(idx.ravel(), minlength=N_BINS)


@dataclass
class ImageStats:
    entropy: float
    std: float
    mean_grad: float
    histogram: np.ndarray

    FIELDS = ("entropy", "std", "mean_grad")


def image_stats(img) -> ImageStats:
    g = to_gray(img)
    hist = gray_histogram(g)
    p = hist[hist > 0] / hist.sum()
    entropy = float(-(p * np.log2(p)).sum()) + 0.0
    if g.shape[0] > 2 and g.shape[1] > 2:
        dx = 0.5 * (g[1:-1, 2:] - g[1:-1, :-2])
        dy = 0.5 * (g[2:, 1:-1] - g[:-2, 1:-1])
        mean_grad = float(np.mean(np.sqrt(dx**2 + dy**2)))
    else:
        mean_grad = 0.0
    return ImageStats(entropy, float(g.std()), mean_grad, hist)


def hist_w1(a, b) -> float:
    """Wasserstein-1 distance between normalized luma histograms, in intensity units."""
    ha = gray_histogram(a).astype(np.float64)
    hb = gray_histogram(b).astype(np.float64)
    cdf_a = np.cumsum(ha / ha.sum())
    cdf_b = np.cumsum(hb / hb.sum())
    return float(np.abs(cdf_a - cdf_b).sum() / N_BINS)
