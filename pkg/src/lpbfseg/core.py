"""Frame and mask data model shared by every other module.

Pixels are addressed row-major with ``x`` as the column and ``y`` as the row,
origin at the top-left corner. Arrays are stored with shape ``(height, width)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

PIXEL_DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when frames or masks with different dimensions are combined."""


class CorruptRecordError(ValueError):
    """Raised when an encoded file or record cannot be decoded."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle with inclusive corners."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1

    @property
    def empty(self) -> bool:
        return self.x1 < self.x0 or self.y1 < self.y0

    @property
    def area(self) -> int:
        return 0 if self.empty else self.width * self.height

    def dilate(self, d: int) -> "Rect":
        return Rect(self.x0 - d, self.y0 - d, self.x1 + d, self.y1 + d)

    def clip(self, width: int, height: int) -> "Rect":
        return Rect(max(self.x0, 0), max(self.y0, 0), min(self.x1, width - 1), min(self.y1, height - 1))

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def within(self, width: int, height: int) -> bool:
        return not self.empty and self.x0 >= 0 and self.y0 >= 0 and self.x1 < width and self.y1 < height

    def slices(self) -> tuple[slice, slice]:
        """Row/column slices for indexing a ``(height, width)`` array."""
        return slice(self.y0, self.y1 + 1), slice(self.x0, self.x1 + 1)

    def to_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "Rect":
        x0, y0, x1, y1 = (int(v) for v in values)
        return cls(x0, y0, x1, y1)


@dataclass(frozen=True, eq=False)
class Frame:
    """One thermal snapshot of the build surface.

    Args:
        pixels: 2D array ``(height, width)`` of non-negative finite intensities.
        index: position of the frame in its sequence.
        laser_nominally_on: simulator metadata, ``None`` for real data.
    """

    pixels: np.ndarray
    index: int = 0
    laser_nominally_on: Optional[bool] = None

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ShapeError(f"frame pixels must be 2D, got shape {px.shape}")
        if px.dtype != PIXEL_DTYPE or px.flags.writeable:
            px = np.array(px, dtype=PIXEL_DTYPE)
        if px.size and not (np.isfinite(px).all() and px.min() >= 0):
            raise ValueError("frame intensities must be finite and >= 0")
        object.__setattr__(self, "pixels", _readonly(px))

    @classmethod
    def from_buffer(cls, values: Sequence[float], width: int, height: int, **kw) -> "Frame":
        """Build a frame from a flat row-major buffer."""
        buf = np.asarray(values, dtype=PIXEL_DTYPE)
        if buf.size != width * height:
            raise ShapeError(f"buffer has {buf.size} values, expected {width}x{height}={width * height}")
        return cls(buf.reshape(height, width), **kw)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary foreground labeling aligned to a frame (True = foreground)."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ShapeError(f"mask must be 2D, got shape {b.shape}")
        if b.dtype != np.bool_ or b.flags.writeable:
            b = np.array(b, dtype=bool)
        object.__setattr__(self, "bits", _readonly(b))

    @classmethod
    def _wrap(cls, bits: np.ndarray) -> "Mask":
        # skips the defensive copy for arrays freshly produced by this package
        m = object.__new__(cls)
        object.__setattr__(m, "bits", _readonly(bits))
        return m

    @classmethod
    def zeros(cls, height: int, width: int) -> "Mask":
        return cls._wrap(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, height: int, width: int) -> "Mask":
        return cls._wrap(np.ones((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def any(self) -> bool:
        return bool(self.bits.any())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))


def check_same_shape(a, b) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")


def mask_or(a: Mask, b: Mask) -> Mask:
    check_same_shape(a, b)
    return Mask._wrap(np.logical_or(a.bits, b.bits))


def mask_apply(frame: Frame, mask: Mask) -> Frame:
    """Keep frame values under the mask and zero everything else."""
    check_same_shape(frame, mask)
    out = np.where(mask.bits, frame.pixels, PIXEL_DTYPE(0))
    return Frame(_readonly(out.astype(PIXEL_DTYPE, copy=False)), index=frame.index,
                 laser_nominally_on=frame.laser_nominally_on)


def fold_or(masks: Iterable[Mask]) -> Mask:
    return reduce(mask_or, masks)


@dataclass
class FrameSequence:
    """Ordered frames of one recording, backed by a ``(n, height, width)`` array.

    ``data`` may be a memory map, so large sequences need not fit in RAM.
    """

    data: np.ndarray
    frame_rate: float = 60.0
    warmup_count: int = 0
    laser_on: Optional[np.ndarray] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ShapeError(f"sequence data must be 3D (n, h, w), got {self.data.shape}")
        if self.warmup_count < 0:
            raise ValueError("warmup_count must be >= 0")
        if self.laser_on is not None and len(self.laser_on) != len(self.data):
            raise ValueError("laser_on flags must align with frames")

    @classmethod
    def from_frames(cls, frames: Sequence[Frame], frame_rate: float = 60.0, warmup_count: int = 0) -> "FrameSequence":
        frames = list(frames)
        for i, f in enumerate(frames):
            if f.index != i:
                raise ValueError(f"frame indices must be consecutive from 0, got {f.index} at {i}")
            if i and f.shape != frames[0].shape:
                raise ShapeError("all frames in a sequence must share dimensions")
        if frames:
            data = np.stack([f.pixels for f in frames])
        else:
            data = np.zeros((0, 0, 0), dtype=PIXEL_DTYPE)
        flags = None
        if frames and all(f.laser_nominally_on is not None for f in frames):
            flags = np.array([f.laser_nominally_on for f in frames], dtype=bool)
        return cls(data, frame_rate=frame_rate, warmup_count=warmup_count, laser_on=flags)

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i: int) -> Frame:
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        on = None if self.laser_on is None else bool(self.laser_on[i])
        return Frame(self.data[i], index=i, laser_nominally_on=on)

    def __iter__(self) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self[i]

    @property
    def frames(self) -> list[Frame]:
        return list(self)

    def warmup(self) -> list[Frame]:
        return [self[i] for i in range(min(self.warmup_count, len(self)))]
