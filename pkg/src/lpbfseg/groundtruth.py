"""Reference labels for raster-scanned frames: cutoff temperature, laser localization,
track-width estimation and the rectangular foreground box with buffer zones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Frame, Rect

Point = tuple[float, float]


class Label(IntEnum):
    BACKGROUND = 0
    FOREGROUND = 1
    EXCLUDED = 2


class ScanDirection(str, Enum):
    LEFT_TO_RIGHT = "LeftToRight"
    RIGHT_TO_LEFT = "RightToLeft"
    TOP_TO_BOTTOM = "TopToBottom"
    BOTTOM_TO_TOP = "BottomToTop"

    @property
    def horizontal(self) -> bool:
        return self in (ScanDirection.LEFT_TO_RIGHT, ScanDirection.RIGHT_TO_LEFT)


@dataclass(frozen=True)
class GtConfig:
    """Geometry used to draw ground-truth boxes.

    ``inner_buffer`` defaults to ``ceil(w/2)`` and ``outer_buffer`` to ``5 * w``.
    With ``inclusive_height`` the box spans ``w + 1`` pixels across the track,
    otherwise ``w``.
    """

    track_width: int
    cutoff: float
    cross_section: Rect
    scan_direction: ScanDirection = ScanDirection.LEFT_TO_RIGHT
    inner_buffer: Optional[int] = None
    outer_buffer: Optional[int] = None
    inclusive_height: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "scan_direction", ScanDirection(self.scan_direction))
        if self.inner_buffer is None:
            object.__setattr__(self, "inner_buffer", (self.track_width + 1) // 2)
        if self.outer_buffer is None:
            object.__setattr__(self, "outer_buffer", 5 * self.track_width)
        if self.track_width < 1:
            raise ValueError("track width must be >= 1")
        if self.inner_buffer < 0 or self.outer_buffer < 0:
            raise ValueError("buffers must be >= 0")
        if self.cross_section.empty:
            raise ValueError("cross-section must be non-empty")

    def validate_for(self, width: int, height: int) -> None:
        if not self.cross_section.within(width, height):
            raise ValueError(f"cross-section {self.cross_section} outside a {width}x{height} frame")

    @property
    def half_low(self) -> int:
        return self.track_width // 2

    @property
    def half_high(self) -> int:
        hi = self.track_width - self.track_width // 2
        return hi if self.inclusive_height else hi - 1

    def to_dict(self) -> dict:
        return {"track_width": self.track_width, "cutoff": self.cutoff,
                "cross_section": self.cross_section.to_list(),
                "scan_direction": self.scan_direction.value,
                "inner_buffer": self.inner_buffer, "outer_buffer": self.outer_buffer,
                "inclusive_height": self.inclusive_height}

    @classmethod
    def from_dict(cls, d: dict) -> "GtConfig":
        d = dict(d)
        d["cross_section"] = Rect.from_list(d["cross_section"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    labels: np.ndarray
    laser_center: Optional[Point] = None
    laser_on: bool = False
    box: Optional[Rect] = None

    def __post_init__(self) -> None:
        self.labels.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def foreground(self) -> np.ndarray:
        return self.labels == Label.FOREGROUND

    @property
    def background(self) -> np.ndarray:
        return self.labels == Label.BACKGROUND

    @property
    def excluded(self) -> np.ndarray:
        return self.labels == Label.EXCLUDED


# -- cutoff and localization ----------------------------------------------------------

def compute_cutoff(warmup: Iterable[Frame]) -> tuple[float, float, float]:
    """Cutoff ``3 * sigma_bs + T_max`` from frames recorded before the laser starts.

    ``sigma_bs`` and ``T_max`` are the per-frame standard deviation and maximum,
    each averaged over the warmup frames. Returns ``(cutoff, sigma_bs, T_max)``.
    """
    sigmas, maxima = [], []
    for f in warmup:
        px = f.pixels if isinstance(f, Frame) else np.asarray(f)
        sigmas.append(float(px.std(dtype=np.float64)))
        maxima.append(float(px.max()))
    if not sigmas:
        raise ValueError("cutoff needs at least one warmup frame")
    sigma_bs = float(np.mean(sigmas))
    t_max = float(np.mean(maxima))
    return 3.0 * sigma_bs + t_max, sigma_bs, t_max


def locate_laser(frame: Frame, cutoff: float, radius: float = 0.0) -> Optional[Point]:
    """Intensity-weighted centroid of the hottest pixels, or ``None`` when max <= cutoff.

    ``radius`` widens the selection to pixels within ``radius`` intensity units of
    the maximum; the default keeps only the argmax pixels.
    """
    px = frame.pixels
    peak = float(px.max())
    if peak <= cutoff:
        return None
    ys, xs = np.nonzero(px >= peak - radius)
    w = px[ys, xs].astype(np.float64)
    return float((xs * w).sum() / w.sum()), float((ys * w).sum() / w.sum())


def _longest_runs(hot: np.ndarray) -> np.ndarray:
    """Longest run of True per column of a 2D boolean array."""
    h, w = hot.shape
    best = np.zeros(w, dtype=np.int64)
    run = np.zeros(w, dtype=np.int64)
    for row in hot:
        run = np.where(row, run + 1, 0)
        np.maximum(best, run, out=best)
    return best


def estimate_track_width(frames: Sequence[Frame], cutoff: float,
                         scan_direction: ScanDirection = ScanDirection.LEFT_TO_RIGHT) -> int:
    """Mean count of contiguous above-cutoff pixels across the track, rounded, at least 1.

    Every frame should contain one isolated laser track. For horizontal scans the
    count runs down each column that intersects the track.
    """
    counts = []
    for f in frames:
        hot = f.pixels > cutoff
        if not ScanDirection(scan_direction).horizontal:
            hot = hot.T
        runs = _longest_runs(hot)
        counts.extend(runs[runs > 0].tolist())
    if not counts:
        raise ValueError("no pixel above the cutoff; cannot estimate the track width")
    return max(1, int(math.floor(float(np.mean(counts)) + 0.5)))


# -- box construction -----------------------------------------------------------------

class _Canon:
    """Maps frame coordinates to a frame where the scan runs left to right."""

    def __init__(self, direction: ScanDirection, width: int, height: int):
        self.d = direction
        self.w, self.h = width, height

    def point(self, p: Point) -> Point:
        x, y = p
        if self.d is ScanDirection.LEFT_TO_RIGHT:
            return x, y
        if self.d is ScanDirection.RIGHT_TO_LEFT:
            return self.w - 1 - x, y
        if self.d is ScanDirection.TOP_TO_BOTTOM:
            return y, x
        return self.h - 1 - y, x

    def rect_to_canon(self, r: Rect) -> Rect:
        a = self.point((r.x0, r.y0))
        b = self.point((r.x1, r.y1))
        return Rect(int(min(a[0], b[0])), int(min(a[1], b[1])), int(max(a[0], b[0])), int(max(a[1], b[1])))

    def rect_from_canon(self, r: Rect) -> Rect:
        if r.empty:
            return r
        if self.d is ScanDirection.LEFT_TO_RIGHT:
            return r
        if self.d is ScanDirection.RIGHT_TO_LEFT:
            return Rect(self.w - 1 - r.x1, r.y0, self.w - 1 - r.x0, r.y1)
        if self.d is ScanDirection.TOP_TO_BOTTOM:
            return Rect(r.y0, r.x0, r.y1, r.x1)
        return Rect(r.y0, self.h - 1 - r.x1, r.y1, self.h - 1 - r.x0)


_EMPTY = Rect(0, 0, -1, -1)


def _round(v: float) -> int:
    return int(math.floor(v + 0.5))


def foreground_box(prev_center: Optional[Point], cur_center: Optional[Point], cfg: GtConfig,
                   width: int, height: int) -> Rect:
    """Foreground rectangle in frame coordinates, clipped to the frame (possibly empty)."""
    canon = _Canon(cfg.scan_direction, width, height)
    cs = canon.rect_to_canon(cfg.cross_section)

    def prep(p: Optional[Point]) -> Optional[tuple[int, int]]:
        if p is None:
            return None
        x, y = canon.point(p)
        return min(max(_round(x), cs.x0), cs.x1), min(max(_round(y), cs.y0), cs.y1)

    prev, cur = prep(prev_center), prep(cur_center)
    if prev is None and cur is None:
        return _EMPTY
    lo, hi = cfg.half_low, cfg.half_high
    trail = cfg.half_high + cfg.inner_buffer
    if prev is not None and cur is not None:
        left, right, cy = prev[0] + trail, cur[0] + hi, cur[1]
    elif prev is not None:
        left, right, cy = prev[0] + trail, cs.x1, prev[1]
    else:
        left, right, cy = cs.x0, cur[0] + hi, cur[1]
    if left >= right:
        return _EMPTY
    cw, ch = (width, height) if cfg.scan_direction.horizontal else (height, width)
    box = Rect(left, cy - lo, right, cy + hi).clip(cw, ch)
    if box.empty:
        return _EMPTY
    return canon.rect_from_canon(box)


def build_gt(prev_center: Optional[Point], cur_center: Optional[Point], cfg: GtConfig,
             width: int, height: int) -> GroundTruth:
    """Three-way labels for one frame.

    The box spans from just past the previous laser position (half a track width
    plus the inner buffer) to half a track width past the current one. Without a
    current position it runs to the far border of the cross-section; without a
    previous one it starts at the near border. Excluded pixels (a ring of
    ``inner_buffer`` around the box and a ring of ``outer_buffer`` outside the
    cross-section) override foreground and background.
    """
    cfg.validate_for(width, height)
    labels = np.zeros((height, width), dtype=np.uint8)
    box = foreground_box(prev_center, cur_center, cfg, width, height)
    cs = cfg.cross_section
    outer = cs.dilate(cfg.outer_buffer).clip(width, height)
    labels[outer.slices()] = Label.EXCLUDED
    labels[cs.slices()] = Label.BACKGROUND
    if not box.empty:
        ring = box.dilate(cfg.inner_buffer).clip(width, height)
        labels[ring.slices()] = Label.EXCLUDED
        labels[box.slices()] = Label.FOREGROUND
        # the outer ring wins over the box where they overlap
        inside = np.zeros((height, width), dtype=bool)
        inside[cs.slices()] = True
        band = np.zeros((height, width), dtype=bool)
        band[outer.slices()] = True
        labels[band & ~inside] = Label.EXCLUDED
    return GroundTruth(labels, laser_center=cur_center, laser_on=cur_center is not None,
                       box=None if box.empty else box)


def build_sequence_gt(centers: Sequence[Optional[Point]], cfg: GtConfig, width: int, height: int) -> list[GroundTruth]:
    """Ground truth for consecutive frames from per-frame laser centers."""
    out, prev = [], None
    for c in centers:
        out.append(build_gt(prev, c, cfg, width, height))
        prev = c
    return out


class LazyGroundTruth(Sequence):
    """Ground truth for a list of laser centers, built on access instead of stored.

    A frame's labels depend only on its own and the previous center, so random
    access is cheap and a full pass costs one :func:`build_gt` per frame.
    """

    def __init__(self, centers: Sequence[Optional[Point]], cfg: GtConfig, width: int, height: int):
        cfg.validate_for(width, height)
        self.centers = list(centers)
        self.cfg, self.width, self.height = cfg, width, height
        self._first_prev: Optional[Point] = None

    def __len__(self) -> int:
        return len(self.centers)

    def __getitem__(self, i):
        if isinstance(i, slice):
            idx = range(len(self))[i]
            if idx.step != 1:
                raise ValueError("only contiguous slices are supported")
            prev = self.centers[idx.start - 1] if idx.start > 0 and len(idx) else None
            sub = LazyGroundTruth(self.centers[i], self.cfg, self.width, self.height)
            sub._first_prev = prev
            return sub
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        prev = self.centers[i - 1] if i > 0 else self._first_prev
        return build_gt(prev, self.centers[i], self.cfg, self.width, self.height)

    def __iter__(self):
        prev = self._first_prev
        for c in self.centers:
            yield build_gt(prev, c, self.cfg, self.width, self.height)
            prev = c
