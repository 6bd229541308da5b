"""Quality metrics for synthetic experiments: SNR (dB) and Gaussian-window SSIM."""
from __future__ import annotations

import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import signal

from sar_despeckler.exceptions import DimensionMismatchError, InvalidParameterError
from sar_despeckler.image_core import Image, require_same_shape


class MetricParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    ssim_window: int = Field(default=11, ge=3)
    ssim_sigma: float = Field(default=1.5, gt=0)
    k1: float = Field(default=0.01, gt=0)
    k2: float = Field(default=0.03, gt=0)
    dynamic_range: Optional[float] = Field(default=None, gt=0)

    @field_validator("ssim_window")
    @classmethod
    def _odd_window(cls, window):
        if window % 2 == 0:
            raise ValueError("ssim_window must be odd")
        return window


def snr_db(clean: Image, estimate: Image) -> float:
    """
    10 log10(sum clean^2 / sum (clean - estimate)^2).

    Returns math.inf when the estimate is exact.
    """
    require_same_shape(clean, estimate)
    signal_energy = float(np.sum(clean.pixels ** 2))
    if signal_energy == 0.0:
        raise InvalidParameterError("SNR is undefined for an all-zero clean image")
    error_energy = float(np.sum((clean.pixels - estimate.pixels) ** 2))
    if error_energy == 0.0:
        return math.inf
    return 10.0 * math.log10(signal_energy / error_energy)


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized 2D Gaussian weights of odd side ``size``."""
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _dynamic_range(clean: Image, params: MetricParams) -> float:
    if params.dynamic_range is not None:
        return params.dynamic_range
    span = float(clean.pixels.max() - clean.pixels.min())
    if span > 0:
        return span
    peak = float(np.abs(clean.pixels).max())
    return peak if peak > 0 else 1.0


def ssim_map(clean: Image, estimate: Image, params: Optional[MetricParams] = None) -> np.ndarray:
    """Local SSIM at every valid (unpadded) window position."""
    params = params or MetricParams()
    require_same_shape(clean, estimate)
    window = params.ssim_window
    if clean.width < window or clean.height < window:
        raise DimensionMismatchError(
            f"SSIM window {window} does not fit a {clean.width}x{clean.height} image"
        )

    w = gaussian_window(window, params.ssim_sigma)
    x = clean.as_array()
    y = estimate.as_array()

    def local_mean(a: np.ndarray) -> np.ndarray:
        return signal.correlate2d(a, w, mode="valid")

    mu_x = local_mean(x)
    mu_y = local_mean(y)
    sigma_x2 = local_mean(x * x) - mu_x ** 2
    sigma_y2 = local_mean(y * y) - mu_y ** 2
    sigma_xy = local_mean(x * y) - mu_x * mu_y

    r = _dynamic_range(clean, params)
    c1 = (params.k1 * r) ** 2
    c2 = (params.k2 * r) ** 2
    numerator = (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)
    denominator = (mu_x ** 2 + mu_y ** 2 + c1) * (sigma_x2 + sigma_y2 + c2)
    return numerator / denominator


def ssim(clean: Image, estimate: Image, params: Optional[MetricParams] = None) -> float:
    """Mean structural similarity over valid Gaussian-weighted windows, in [-1, 1]."""
    return float(np.mean(ssim_map(clean, estimate, params)))
