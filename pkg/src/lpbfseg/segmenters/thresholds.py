"""Thresholding kernels: fixed, SubMax, frame differencing, global and local automatic methods.

The array-level functions (``*_array``) work on raw ``(h, w)`` arrays and are what the
streaming segmenters call; the public functions accept :class:`~lpbfseg.core.Frame`.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import ndimage

from ..core import PIXEL_DTYPE, Frame, Mask, check_same_shape

GLOBAL_METHODS = ("otsu", "li", "isodata", "yen", "triangle")
LOCAL_METHODS = ("sauvola", "adapt_mean", "adapt_gauss")
DEFAULT_NBINS = 256


class AutoThreshold(NamedTuple):
    threshold: float
    degenerate: bool


def threshold_fixed(frame: Frame, lam: float) -> Mask:
    """Foreground where the pixel is strictly above ``lam``."""
    if not np.isfinite(lam):
        raise ValueError("threshold must be finite")
    return Mask._wrap(frame.pixels > lam)


def submax_array(px: np.ndarray, delta: float) -> np.ndarray:
    if px.size == 0:
        raise ValueError("SubMax needs a non-empty frame")
    return px >= px.max() - delta


def submax(frame: Frame, delta: float) -> Mask:
    """Foreground where the pixel lies within ``delta`` of the frame maximum (inclusive)."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    return Mask._wrap(submax_array(frame.pixels, delta))


def frame_difference_array(cur: np.ndarray, prev: np.ndarray, out: np.ndarray | None = None,
                           absolute: bool = False) -> np.ndarray:
    out = np.subtract(cur, prev, out=out)
    if absolute:
        return np.abs(out, out=out)
    return np.maximum(out, 0, out=out)


def frame_difference(current: Frame, previous: Frame, absolute: bool = False) -> Frame:
    """Per-pixel ``max(current - previous, 0)``; cooling pixels clamp to zero."""
    check_same_shape(current, previous)
    diff = frame_difference_array(current.pixels, previous.pixels, absolute=absolute)
    return Frame(diff, index=current.index, laser_nominally_on=current.laser_nominally_on)


# -- global automatic thresholds ------------------------------------------------------

def histogram(px: np.ndarray, nbins: int = DEFAULT_NBINS) -> tuple[np.ndarray, np.ndarray]:
    """Counts and bin centers for ``nbins`` uniform bins over ``[min, max]``."""
    lo, hi = float(px.min()), float(px.max())
    counts, edges = np.histogram(px, bins=nbins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2.0
    return counts.astype(np.float64), centers


def otsu_from_hist(counts: np.ndarray, centers: np.ndarray) -> float:
    w1 = np.cumsum(counts)
    w2 = np.cumsum(counts[::-1])[::-1]
    weighted = counts * centers
    with np.errstate(divide="ignore", invalid="ignore"):
        m1 = np.cumsum(weighted) / w1
        m2 = (np.cumsum(weighted[::-1]) / w2[::-1])[::-1]
        between = w1[:-1] * w2[1:] * (m1[:-1] - m2[1:]) ** 2
    between = np.nan_to_num(between, nan=-1.0)
    return float(centers[int(np.argmax(between))])


def isodata_from_hist(counts: np.ndarray, centers: np.ndarray, max_iter: int = 1000) -> float:
    """Ridler-Calvard iteration ``t <- (mean below + mean above) / 2`` on the histogram."""
    total = counts.sum()
    t = float((counts * centers).sum() / total)
    step = centers[1] - centers[0]
    for _ in range(max_iter):
        below = centers <= t
        n_lo, n_hi = counts[below].sum(), counts[~below].sum()
        if n_lo == 0 or n_hi == 0:
            break
        m_lo = (counts[below] * centers[below]).sum() / n_lo
        m_hi = (counts[~below] * centers[~below]).sum() / n_hi
        t_new = (m_lo + m_hi) / 2.0
        if abs(t_new - t) < step / 2:
            t = t_new
            break
        t = t_new
    return float(t)


def li_from_hist(counts: np.ndarray, centers: np.ndarray, max_iter: int = 1000) -> float:
    """Iterative minimum cross-entropy threshold (Li & Tam) on the histogram."""
    offset = centers[0] - (centers[1] - centers[0]) / 2.0
    vals = centers - offset  # shift so the smallest intensity sits at zero
    total = counts.sum()
    t = float((counts * vals).sum() / total)
    tol = (centers[1] - centers[0]) / 2.0
    for _ in range(max_iter):
        fore = vals > t
        n_f, n_b = counts[fore].sum(), counts[~fore].sum()
        if n_f == 0 or n_b == 0:
            break
        m_f = (counts[fore] * vals[fore]).sum() / n_f
        m_b = (counts[~fore] * vals[~fore]).sum() / n_b
        if m_b <= 0 or m_f <= 0:
            break
        t_new = (m_b - m_f) / (np.log(m_b) - np.log(m_f))
        if abs(t_new - t) < tol:
            t = t_new
            break
        t = t_new
    return float(t + offset)


def yen_from_hist(counts: np.ndarray, centers: np.ndarray) -> float:
    pmf = counts / counts.sum()
    p1 = np.cumsum(pmf)
    p1_sq = np.cumsum(pmf ** 2)
    p2_sq = np.cumsum((pmf ** 2)[::-1])[::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        crit = np.log(((p1_sq[:-1] * p2_sq[1:]) ** -1) * (p1[:-1] * (1.0 - p1[:-1])) ** 2)
    crit = np.nan_to_num(crit, nan=-np.inf, posinf=-np.inf)
    return float(centers[int(np.argmax(crit))])


def triangle_from_hist(counts: np.ndarray, centers: np.ndarray) -> float:
    nbins = len(counts)
    hist = counts
    peak = int(np.argmax(hist))
    nz = np.flatnonzero(hist)
    low, high = int(nz[0]), int(nz[-1])
    if low == high:
        return float(centers[low])
    flip = peak - low < high - peak
    if flip:
        hist = hist[::-1]
        low = nbins - high - 1
        peak = nbins - peak - 1
    width = peak - low
    if width == 0:
        level = low
    else:
        height = hist[peak]
        norm = np.hypot(height, width)
        x = np.arange(width)
        y = hist[x + low]
        level = int(np.argmax(height / norm * x - width / norm * y)) + low
    if flip:
        level = nbins - level - 1
    return float(centers[level])


_HIST_METHODS = {
    "otsu": otsu_from_hist,
    "li": li_from_hist,
    "isodata": isodata_from_hist,
    "yen": yen_from_hist,
    "triangle": triangle_from_hist,
}


def global_threshold_array(px: np.ndarray, method: str, nbins: int = DEFAULT_NBINS) -> AutoThreshold:
    if nbins < 2:
        raise ValueError("nbins must be >= 2")
    try:
        fn = _HIST_METHODS[method]
    except KeyError:
        raise ValueError(f"unknown global method {method!r}; expected one of {GLOBAL_METHODS}") from None
    lo, hi = float(px.min()), float(px.max())
    if lo == hi:
        return AutoThreshold(lo, True)
    counts, centers = histogram(px, nbins)
    return AutoThreshold(fn(counts, centers), False)


def global_auto_threshold(frame: Frame, method: str, nbins: int = DEFAULT_NBINS) -> AutoThreshold:
    """Histogram-based global threshold; the induced mask is ``pixel > threshold``.

    A constant frame has no class separation: its value is returned with
    ``degenerate=True`` so the induced mask is all-false.
    """
    return global_threshold_array(frame.pixels, method, nbins)


# -- local automatic thresholds -------------------------------------------------------

def gaussian_sigma_for_window(window: int) -> float:
    return 0.3 * ((window - 1) * 0.5 - 1) + 0.8


def _gaussian_kernel(window: int) -> np.ndarray:
    sigma = gaussian_sigma_for_window(window)
    r = (window - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def check_window(window: int, height: int, width: int) -> None:
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    if window >= min(width, height):
        raise ValueError(f"window {window} must be smaller than the frame ({width}x{height})")


def local_threshold_surface(px: np.ndarray, method: str, window: int, k: float = 0.2, c: float = 0.0) -> np.ndarray:
    """Per-pixel threshold surface; the induced mask is ``pixel > surface``."""
    check_window(window, *px.shape)
    x = px.astype(np.float64)
    if method == "adapt_mean":
        return ndimage.uniform_filter(x, size=window, mode="reflect") - c
    if method == "adapt_gauss":
        kern = _gaussian_kernel(window)
        m = ndimage.correlate1d(x, kern, axis=0, mode="reflect")
        return ndimage.correlate1d(m, kern, axis=1, mode="reflect") - c
    if method == "sauvola":
        m = ndimage.uniform_filter(x, size=window, mode="reflect")
        m2 = ndimage.uniform_filter(x * x, size=window, mode="reflect")
        s = np.sqrt(np.maximum(m2 - m * m, 0.0))
        r = float(x.max() - x.min()) or 1.0
        return m * (1.0 + k * (s / r - 1.0))
    raise ValueError(f"unknown local method {method!r}; expected one of {LOCAL_METHODS}")


def local_auto_threshold(frame: Frame, method: str, window: int, k: float = 0.2, C: float = 0.0) -> Mask:
    """Locally adaptive threshold over ``window x window`` patches with reflect padding."""
    surface = local_threshold_surface(frame.pixels, method, window, k=k, c=C)
    return Mask._wrap(frame.pixels > surface)


__all__ = [
    "AutoThreshold", "GLOBAL_METHODS", "LOCAL_METHODS", "DEFAULT_NBINS", "PIXEL_DTYPE",
    "threshold_fixed", "submax", "frame_difference", "global_auto_threshold",
    "local_auto_threshold", "histogram", "gaussian_sigma_for_window",
]
