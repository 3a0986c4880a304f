"""No-reference blur metric: cumulative probability of blur detection.

Pipeline: Sobel edges on the 0-255 luminance, plateau-preserving thinning
along the dominant gradient axis, per-edge width measured between local
extrema of the intensity profile, blur-detection probability
P = 1 - exp(-(w / w_jnb)^beta), and the score is the fraction of edge
pixels with P <= 0.63. Higher scores mean sharper images.

The per-edge scan is the hot loop; a compiled kernel is used when the
extension built, with a pure-Python twin as fallback
(``THERM2VIS_PURE_PYTHON=1`` forces the fallback).
"""

from __future__ import annotations

import os

import numpy as np

from . import _edgewidth_py

try:
    from . import _edgewidth as _compiled
except ImportError:  # extension not built
    _compiled = None

HAVE_COMPILED_KERNEL = _compiled is not None

BETA = 3.6
P_SHARP = 0.63
# Just-noticeable edge widths for low/high local contrast (0-255 scale).
JNB_LOW_CONTRAST = 5.0
JNB_HIGH_CONTRAST = 3.0
CONTRAST_SPLIT = 50.0


def active_kernel():
    if _compiled is not None and not os.environ.get("THERM2VIS_PURE_PYTHON"):
        return _compiled.measure_edges
    return _edgewidth_py.measure_edges


def sobel_gradients(g: np.ndarray):
    """3x3 Sobel gradients with reflect-101 borders."""
    p = np.pad(g, 1, mode="reflect")
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return gx, gy


def detect_edges(g: np.ndarray):
    """Edge mask: magnitude above 2x RMS, local max along the dominant axis.

    The local-max test uses >= so plateau edges (ideal steps, ramps) keep
    both sides rather than vanishing.
    """
    gx, gy = sobel_gradients(g)
    mag = np.hypot(gx, gy)
    rms = float(np.sqrt(np.mean(mag**2)))
    if rms == 0.0:
        return np.zeros(g.shape, dtype=bool), gx, gy
    strong = mag > 2.0 * rms

    padded = np.pad(mag, 1, mode="constant")
    core = padded[1:-1, 1:-1]
    horiz_max = (core >= padded[1:-1, :-2]) & (core >= padded[1:-1, 2:])
    vert_max = (core >= padded[:-2, 1:-1]) & (core >= padded[2:, 1:-1])
    dominant_h = np.abs(gx) >= np.abs(gy)
    thin = np.where(dominant_h, horiz_max, vert_max)
    return strong & thin, gx, gy


def blur_probabilities(widths: np.ndarray, contrasts: np.ndarray) -> np.ndarray:
    w_jnb = np.where(contrasts <= CONTRAST_SPLIT, JNB_LOW_CONTRAST, JNB_HIGH_CONTRAST)
    return 1.0 - np.exp(-((widths / w_jnb) ** BETA))


def blur_cpbd(lum: np.ndarray) -> tuple[float, dict]:
    """Score in [0, 1] plus diagnostics ({'no_edge': bool, 'n_edges': int})."""
    g = np.ascontiguousarray(lum, dtype=np.float64) * 255.0
    edges, gx, gy = detect_edges(g)
    rows, cols = np.nonzero(edges)
    if rows.size == 0:
        return 0.0, {"no_edge": True, "n_edges": 0}
    widths, contrasts = active_kernel()(
        g, gx, gy, rows.astype(np.int64), cols.astype(np.int64)
    )
    p = blur_probabilities(np.asarray(widths, dtype=np.float64), contrasts)
    score = float(np.count_nonzero(p <= P_SHARP)) / rows.size
    return score, {"no_edge": False, "n_edges": int(rows.size)}
