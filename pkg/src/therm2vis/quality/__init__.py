"""Seven no-reference quality metrics over BT.601 luminance.

All metrics accept a 2-D luminance grid with values in [0, 1] and any
size >= 16x16; `compute_quality` applies them all to one RGB image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import luminance
from ..errors import ContractError
from .cpbd import HAVE_COMPILED_KERNEL, blur_cpbd, sobel_gradients

# Largest Sobel gradient magnitude attainable on a [0, 1] image
# (sqrt(20), reached by an L-shaped binary corner patch).
MAX_SOBEL_MAGNITUDE = 20.0**0.5

# Superpixel downscale factors of the multi-resolution contrast measure;
# factors larger than the image are skipped, weights are not renormalized.
GCF_FACTORS = (1, 2, 4, 8, 16, 25, 50, 100, 200)

EXPOSURE_BINS = 256
LS_BINS = 64


@dataclass
class QualityVector:
    sharpness: float
    blur: float
    exposure: float
    gcf: float
    contrast: float
    light_symmetry: float
    brightness: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    METRIC_ORDER = (
        "sharpness", "blur", "exposure", "gcf", "contrast", "light_symmetry",
        "brightness",
    )

    def as_tuple(self):
        return tuple(getattr(self, name) for name in self.METRIC_ORDER)


def _check_lum(lum: np.ndarray) -> np.ndarray:
    lum = np.asarray(lum, dtype=np.float64)
    if lum.ndim != 2:
        raise ContractError("luminance must be a 2-D grid")
    if lum.shape[0] < 16 or lum.shape[1] < 16:
        raise ContractError("luminance grid must be at least 16x16")
    if float(lum.min()) < -1e-9 or float(lum.max()) > 1.0 + 1e-9:
        raise ContractError("luminance values must lie in [0, 1]")
    return np.clip(lum, 0.0, 1.0)


def brightness(lum: np.ndarray) -> float:
    return float(_check_lum(lum).mean())


def contrast(lum: np.ndarray) -> float:
    """Percentile spread P99 - P1 of the luminance distribution."""
    lum = _check_lum(lum)
    p1, p99 = np.percentile(lum, [1.0, 99.0])
    return float(p99 - p1)


def sharpness(lum: np.ndarray) -> float:
    """Mean Sobel gradient magnitude, normalized by the attainable maximum."""
    lum = _check_lum(lum)
    gx, gy = sobel_gradients(lum)
    return float(np.hypot(gx, gy).mean() / MAX_SOBEL_MAGNITUDE)


def blur(lum: np.ndarray) -> float:
    value, _ = blur_cpbd(_check_lum(lum))
    return value


def exposure(lum: np.ndarray) -> float:
    """Histogram balance: 1 minus twice the mean distance from mid-gray.

    Bin b of the 256-bin histogram represents value b/256, so a constant
    0.5 image lands in the bin whose representative is exactly 0.5.
    """
    lum = _check_lum(lum)
    bins = np.minimum((lum * EXPOSURE_BINS).astype(np.int64), EXPOSURE_BINS - 1)
    hist = np.bincount(bins.ravel(), minlength=EXPOSURE_BINS) / lum.size
    centers = np.arange(EXPOSURE_BINS) / EXPOSURE_BINS
    penalty = float(np.sum(hist * np.abs(centers - 0.5) * 2.0))
    return float(np.clip(1.0 - penalty, 0.0, 1.0))


def _block_average(image: np.ndarray, factor: int) -> np.ndarray:
    h = image.shape[0] // factor
    w = image.shape[1] // factor
    cropped = image[: h * factor, : w * factor]
    return cropped.reshape(h, factor, w, factor).mean(axis=(1, 3))


def _mean_local_contrast(lightness: np.ndarray) -> float:
    """Mean over pixels of the mean |dL| over valid 4-neighbors."""
    h, w = lightness.shape
    if h < 2 and w < 2:
        return 0.0
    diff_sum = np.zeros_like(lightness)
    counts = np.zeros_like(lightness)
    if w >= 2:
        d = np.abs(lightness[:, 1:] - lightness[:, :-1])
        diff_sum[:, 1:] += d
        diff_sum[:, :-1] += d
        counts[:, 1:] += 1
        counts[:, :-1] += 1
    if h >= 2:
        d = np.abs(lightness[1:, :] - lightness[:-1, :])
        diff_sum[1:, :] += d
        diff_sum[:-1, :] += d
        counts[1:, :] += 1
        counts[:-1, :] += 1
    return float(np.mean(diff_sum / counts))


def gcf(lum: np.ndarray) -> float:
    """Weighted multi-resolution mean of local perceptual-lightness contrast."""
    lum = _check_lum(lum)
    total = 0.0
    for i, factor in enumerate(GCF_FACTORS, start=1):
        if lum.shape[0] // factor < 1 or lum.shape[1] // factor < 1:
            continue
        scaled = _block_average(lum, factor)
        lightness = 100.0 * np.sqrt(scaled**2.2)
        weight = (-0.406385 * i / 9.0 + 0.334573) * (i / 9.0) + 0.0877526
        total += weight * _mean_local_contrast(lightness)
    return total


def light_symmetry(lum: np.ndarray) -> float:
    """Half L1 distance between left- and right-half luminance histograms.

    0 means perfectly symmetric illumination; 1 disjoint distributions.
    """
    lum = _check_lum(lum)
    w = lum.shape[1]
    left = lum[:, : w // 2]
    right = lum[:, w - w // 2 :]

    def hist(half):
        bins = np.minimum((half * LS_BINS).astype(np.int64), LS_BINS - 1)
        return np.bincount(bins.ravel(), minlength=LS_BINS) / half.size

    return float(0.5 * np.abs(hist(left) - hist(right)).sum())


def compute_quality(image: np.ndarray) -> QualityVector:
    """All seven metrics of an H x W x 3 image in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ContractError(f"expected H x W x 3 image, got shape {image.shape}")
    lum = _check_lum(luminance(image))
    blur_value, blur_diag = blur_cpbd(lum)
    return QualityVector(
        sharpness=sharpness(lum),
        blur=blur_value,
        exposure=exposure(lum),
        gcf=gcf(lum),
        contrast=contrast(lum),
        light_symmetry=light_symmetry(lum),
        brightness=brightness(lum),
        diagnostics={"blur_no_edge": blur_diag["no_edge"]},
    )


__all__ = [
    "QualityVector",
    "brightness",
    "contrast",
    "sharpness",
    "blur",
    "blur_cpbd",
    "exposure",
    "gcf",
    "light_symmetry",
    "compute_quality",
    "HAVE_COMPILED_KERNEL",
]
