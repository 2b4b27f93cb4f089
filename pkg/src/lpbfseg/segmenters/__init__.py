"""Streaming foreground segmenters behind one interface.

>>> seg = make_segmenter(parse_name("FD+Thresh(4.44)"))
>>> masks = [seg.step(frame) for frame in sequence]  # doctest: +SKIP
"""

from . import mixture, simple  # noqa: F401  (registers the built-in algorithms)
from .base import (
    FD, GLOBAL_AUTO, KNN, LOCAL_AUTO, MOG, MOG2, SUBMAX, THRESH,
    DiffStage, FrameDifferencing, Segmenter, SegmenterSpec, UnknownAlgorithmError,
    default_params, known_names, make_segmenter, parse_name, preset_params, presets, register,
)
from .thresholds import (
    GLOBAL_METHODS, LOCAL_METHODS, AutoThreshold, frame_difference, global_auto_threshold,
    local_auto_threshold, submax, threshold_fixed,
)

__all__ = [
    "FD", "GLOBAL_AUTO", "KNN", "LOCAL_AUTO", "MOG", "MOG2", "SUBMAX", "THRESH",
    "DiffStage", "FrameDifferencing", "Segmenter", "SegmenterSpec", "UnknownAlgorithmError",
    "default_params", "known_names", "make_segmenter", "parse_name", "preset_params", "presets", "register",
    "GLOBAL_METHODS", "LOCAL_METHODS", "AutoThreshold", "frame_difference", "global_auto_threshold",
    "local_auto_threshold", "submax", "threshold_fixed",
]
