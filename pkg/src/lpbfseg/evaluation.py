"""Pixel-wise scoring against ground truth and composite masks for spatter analysis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Mask, Rect, ShapeError, check_same_shape
from .groundtruth import GroundTruth, Label


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int = 0
    FP: int = 0
    TN: int = 0
    FN: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.TP + other.TP, self.FP + other.FP, self.TN + other.TN, self.FN + other.FN)

    @property
    def total(self) -> int:
        return self.TP + self.FP + self.TN + self.FN

    def to_dict(self) -> dict:
        return {"TP": self.TP, "FP": self.FP, "TN": self.TN, "FN": self.FN}


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1}


class GtView:
    """Flat indices of the foreground and excluded pixels of one ground truth.

    Scoring against a view touches only those pixels plus one count over the
    prediction, which keeps repeated scoring (tuning trials) cheap.
    """

    __slots__ = ("shape", "fg_idx", "ex_idx", "n_fg", "n_bg")

    def __init__(self, gt: GroundTruth):
        labels = gt.labels.reshape(-1)
        self.shape = gt.labels.shape
        self.fg_idx = np.flatnonzero(labels == Label.FOREGROUND)
        self.ex_idx = np.flatnonzero(labels == Label.EXCLUDED)
        self.n_fg = int(self.fg_idx.size)
        self.n_bg = labels.size - self.n_fg - int(self.ex_idx.size)


def confusion(pred: Mask, gt: GroundTruth | GtView) -> ConfusionCounts:
    """Pixel-wise counts; excluded pixels count toward nothing."""
    view = gt if isinstance(gt, GtView) else GtView(gt)
    if pred.shape != view.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match ground truth {view.shape}")
    flat = pred.bits.reshape(-1)
    tp = int(np.count_nonzero(flat[view.fg_idx]))
    fp = int(np.count_nonzero(flat)) - tp - int(np.count_nonzero(flat[view.ex_idx]))
    return ConfusionCounts(TP=tp, FP=fp, TN=view.n_bg - fp, FN=view.n_fg - tp)


def f1(counts: ConfusionCounts) -> Score:
    """Precision, recall and their harmonic mean, with 0/0 taken as 0."""
    tp, fp, fn = counts.TP, counts.FP, counts.FN
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    # equals 2PR / (P + R) but rounds once; P + R = 0 exactly when TP = 0
    return Score(precision, recall, 2.0 * tp / (2 * tp + fp + fn) if tp else 0.0)


class ScoreAccumulator:
    """Micro-averaged score over a stream of frames, with per-frame scores on the side."""

    def __init__(self, keep_per_frame: bool = True):
        self.total = ConfusionCounts()
        self.per_frame: list[ConfusionCounts] = []
        self.keep_per_frame = keep_per_frame

    def add(self, pred: Mask, gt: GroundTruth | GtView) -> ConfusionCounts:
        c = confusion(pred, gt)
        self.total = self.total + c
        if self.keep_per_frame:
            self.per_frame.append(c)
        return c

    def score(self) -> Score:
        return f1(self.total)

    def macro_f1(self) -> float:
        """Mean per-frame F1 over frames that have any foreground or prediction (diagnostic only)."""
        vals = [f1(c).f1 for c in self.per_frame if c.TP + c.FP + c.FN > 0]
        return float(np.mean(vals)) if vals else 0.0


def evaluate(masks: Iterable[Mask], gts: Iterable[GroundTruth]) -> tuple[Score, ConfusionCounts]:
    acc = ScoreAccumulator(keep_per_frame=False)
    for m, g in _zip_strict(masks, gts):
        acc.add(m, g)
    return acc.score(), acc.total


def _zip_strict(a: Iterable, b: Iterable):
    ia, ib = iter(a), iter(b)
    sentinel = object()
    while True:
        x, y = next(ia, sentinel), next(ib, sentinel)
        if x is sentinel and y is sentinel:
            return
        if x is sentinel or y is sentinel:
            raise ValueError("masks and ground truth have different lengths")
        yield x, y


def composite(masks: Sequence[Mask], shape: Optional[tuple[int, int]] = None) -> Mask:
    """Pixels that were foreground in at least one mask.

    An empty list gives an all-false mask of ``shape`` (required in that case).
    """
    masks = list(masks)
    if not masks:
        if shape is None:
            raise ValueError("composite of no masks needs an explicit shape")
        return Mask.zeros(*shape)
    acc = np.zeros(masks[0].shape, dtype=bool)
    for m in masks:
        check_same_shape(m, masks[0])
        np.logical_or(acc, m.bits, out=acc)
    return Mask._wrap(acc)


class CompositeAccumulator:
    """Streaming version of :func:`composite`."""

    def __init__(self, shape: Optional[tuple[int, int]] = None):
        self.bits = None if shape is None else np.zeros(shape, dtype=bool)

    def add(self, mask: Mask) -> None:
        if self.bits is None:
            self.bits = np.zeros(mask.shape, dtype=bool)
        check_same_shape(mask, self.bits)
        np.logical_or(self.bits, mask.bits, out=self.bits)

    def mask(self) -> Mask:
        if self.bits is None:
            raise ValueError("no masks added")
        return Mask(self.bits)


def spatter_outside_fraction(comp: Mask, region: Rect, overflow: int) -> float:
    """Fraction of composite foreground pixels outside ``region`` grown by ``overflow`` pixels."""
    if overflow < 0:
        raise ValueError("overflow must be >= 0")
    total = comp.count()
    if total == 0:
        return 0.0
    h, w = comp.shape
    grown = region.dilate(overflow).clip(w, h)
    inside = 0 if grown.empty else int(np.count_nonzero(comp.bits[grown.slices()]))
    return (total - inside) / total


__all__ = [
    "ConfusionCounts", "Score", "GtView", "confusion", "f1", "ScoreAccumulator", "evaluate",
    "composite", "CompositeAccumulator", "spatter_outside_fraction",
]
