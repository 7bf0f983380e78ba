"""Image-quality metrics and stopping rules for reconstruction runs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP_DB = 300.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def relative_error_sq(x, x_ref) -> float:
    """Squared relative error ||x - x_ref||^2 / ||x_ref||^2."""
    x = np.asarray(x, dtype=np.float64)
    x_ref = np.asarray(x_ref, dtype=np.float64)
    denom = float(np.sum(x_ref * x_ref))
    if denom == 0.0:
        raise ValueError("reference has zero norm")
    diff = x - x_ref
    return float(np.sum(diff * diff)) / denom


def psnr(x, x_ref, data_range: float) -> float:
    """Peak signal-to-noise ratio in dB, capped at 300 dB for zero MSE."""
    if data_range <= 0.0:
        raise ValueError("data_range must be positive")
    x = np.asarray(x, dtype=np.float64)
    x_ref = np.asarray(x_ref, dtype=np.float64)
    mse = float(np.mean((x - x_ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(data_range * data_range / mse), PSNR_CAP_DB)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    w1 = np.exp(-offsets * offsets / (2.0 * sigma * sigma))
    window = np.outer(w1, w1)
    return window / window.sum()


def _ssim_terms(mu_x, mu_y, xx, yy, xy, data_range):
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y
    return ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
            / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)))


def ssim(x, x_ref) -> float:
    """Mean local structural similarity with an 11x11 Gaussian window.

    Windows are fully interior (no padding); the dynamic range is taken
    from the reference.  Images smaller than the window fall back to a
    single global comparison.
    """
    x = np.asarray(x, dtype=np.float64)
    x_ref = np.asarray(x_ref, dtype=np.float64)
    if x.shape != x_ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_ref.shape}")
    data_range = float(x_ref.max() - x_ref.min())
    if data_range == 0.0:
        data_range = 1.0
    if min(x.shape) < SSIM_WINDOW:
        mu_x, mu_y = x.mean(), x_ref.mean()
        return float(_ssim_terms(mu_x, mu_y, (x * x).mean(), (x_ref * x_ref).mean(),
                                 (x * x_ref).mean(), data_range))
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)

    def local(img):
        views = sliding_window_view(img, (SSIM_WINDOW, SSIM_WINDOW))
        return np.tensordot(views, window, axes=([2, 3], [0, 1]))

    ssim_map = _ssim_terms(local(x), local(x_ref), local(x * x),
                           local(x_ref * x_ref), local(x * x_ref), data_range)
    return float(ssim_map.mean())


@dataclass(frozen=True)
class StoppingRule:
    """Stop at a squared-relative-error tolerance, or when a data-pass or
    wall-clock budget runs out; at least one budget must be finite."""

    tolerance: float | None = None
    max_data_passes: float | None = None
    time_budget: float | None = None

    def __post_init__(self):
        budgets = (self.max_data_passes, self.time_budget)
        if all(b is None or not math.isfinite(b) for b in budgets):
            raise ValueError("at least one of the budgets must be finite")
        if self.max_data_passes is not None and self.max_data_passes <= 0:
            raise ValueError("max_data_passes must be positive")
        if self.time_budget is not None and self.time_budget <= 0:
            raise ValueError("time_budget must be positive")
