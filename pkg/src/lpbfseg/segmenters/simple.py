"""Stateless per-frame segmenters (plus plain frame differencing)."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import thresholds as th
from .base import FD, GLOBAL_AUTO, LOCAL_AUTO, SUBMAX, THRESH, Segmenter, SegmenterSpec, register


@register(THRESH)
class ThreshSegmenter(Segmenter):
    def __init__(self, spec: SegmenterSpec, seed: int = 0):
        super().__init__(spec, seed)
        self.lam = float(spec.params["lambda"])

    def _segment(self, px: np.ndarray) -> np.ndarray:
        return px > self.lam


@register(SUBMAX)
class SubMaxSegmenter(Segmenter):
    def __init__(self, spec: SegmenterSpec, seed: int = 0):
        super().__init__(spec, seed)
        self.delta = float(spec.params["delta"])

    def _segment(self, px: np.ndarray) -> np.ndarray:
        return th.submax_array(px, self.delta)


@register(FD)
class FDSegmenter(Segmenter):
    """Plain frame differencing: every pixel that got warmer than in the previous frame."""

    def __init__(self, spec: SegmenterSpec, seed: int = 0):
        super().__init__(spec, seed)
        self.previous_frame: Optional[np.ndarray] = None
        self._diff: Optional[np.ndarray] = None

    def _segment(self, px: np.ndarray) -> np.ndarray:
        prev, self.previous_frame = self.previous_frame, px
        if prev is None:
            self._diff = np.empty_like(px)
            return np.zeros(px.shape, dtype=bool)
        np.subtract(px, prev, out=self._diff)
        return self._diff > 0


@register(GLOBAL_AUTO)
class GlobalAutoSegmenter(Segmenter):
    def __init__(self, spec: SegmenterSpec, seed: int = 0):
        super().__init__(spec, seed)
        if spec.method not in th.GLOBAL_METHODS:
            raise ValueError(f"GlobalAuto needs a method in {th.GLOBAL_METHODS}, got {spec.method!r}")
        self.nbins = int(spec.params.get("nbins", th.DEFAULT_NBINS))
        self.last: Optional[th.AutoThreshold] = None

    def _segment(self, px: np.ndarray) -> np.ndarray:
        self.last = th.global_threshold_array(px, self.spec.method, self.nbins)
        if self.last.degenerate:
            return np.zeros(px.shape, dtype=bool)
        return px > self.last.threshold


@register(LOCAL_AUTO)
class LocalAutoSegmenter(Segmenter):
    def __init__(self, spec: SegmenterSpec, seed: int = 0):
        super().__init__(spec, seed)
        if spec.method not in th.LOCAL_METHODS:
            raise ValueError(f"LocalAuto needs a method in {th.LOCAL_METHODS}, got {spec.method!r}")
        p = spec.params
        self.window = int(p["box"])
        self.k = float(p.get("k", 0.2))
        self.c = float(p.get("C", 0.0))

    def _segment(self, px: np.ndarray) -> np.ndarray:
        return px > th.local_threshold_surface(px, self.spec.method, self.window, k=self.k, c=self.c)
