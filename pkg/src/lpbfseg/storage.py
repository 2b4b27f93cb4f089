"""Lossless run-length storage of foreground pixels and their raw intensities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import PIXEL_DTYPE, CorruptRecordError, Frame, Mask, check_same_shape

INDEX_DTYPE = np.uint32


@dataclass(frozen=True, eq=False)
class SparseForeground:
    """Foreground of one frame as row-major runs.

    Run ``i`` covers row ``ys[i]``, columns ``xs[i] .. xs[i] + lengths[i] - 1``;
    ``values`` holds the raw intensities of all runs back to back.
    """

    frame_index: int
    ys: np.ndarray
    xs: np.ndarray
    lengths: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        for name in ("ys", "xs", "lengths"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=INDEX_DTYPE))
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=PIXEL_DTYPE))
        if not (self.ys.shape == self.xs.shape == self.lengths.shape) or self.ys.ndim != 1:
            raise CorruptRecordError("run tables must be 1-D and of equal length")

    @property
    def n_runs(self) -> int:
        return int(self.ys.size)

    @property
    def n_pixels(self) -> int:
        return int(self.values.size)

    @property
    def runs(self) -> list[tuple[int, int, np.ndarray]]:
        """``(y, x_start, values)`` per run."""
        ends = np.cumsum(self.lengths, dtype=np.int64)
        starts = ends - self.lengths
        return [(int(y), int(x), self.values[s:e]) for y, x, s, e in zip(self.ys, self.xs, starts, ends)]

    @classmethod
    def from_runs(cls, frame_index: int, runs) -> "SparseForeground":
        runs = list(runs)
        vals = [np.asarray(v, dtype=PIXEL_DTYPE).reshape(-1) for _, _, v in runs]
        return cls(frame_index,
                   np.array([r[0] for r in runs], dtype=np.int64),
                   np.array([r[1] for r in runs], dtype=np.int64),
                   np.array([v.size for v in vals], dtype=np.int64),
                   np.concatenate(vals) if vals else np.zeros(0, PIXEL_DTYPE))

    def check(self, width: int, height: int) -> None:
        """Raise CorruptRecordError unless the runs are non-empty, in bounds, sorted and disjoint."""
        if self.n_runs == 0:
            if self.n_pixels:
                raise CorruptRecordError("values without runs")
            return
        lengths = self.lengths.astype(np.int64)
        if lengths.min() < 1:
            raise CorruptRecordError("zero-length run")
        if int(lengths.sum()) != self.n_pixels:
            raise CorruptRecordError(f"runs cover {int(lengths.sum())} pixels but {self.n_pixels} values are stored")
        ys, xs = self.ys.astype(np.int64), self.xs.astype(np.int64)
        if ys.max() >= height or (xs + lengths).max() > width:
            raise CorruptRecordError(f"run outside a {width}x{height} frame")
        start = ys * width + xs
        if np.any(start[1:] < (start + lengths)[:-1]):
            raise CorruptRecordError("runs overlap or are out of order")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseForeground):
            return NotImplemented
        return (self.frame_index == other.frame_index
                and all(np.array_equal(getattr(self, n), getattr(other, n))
                        for n in ("ys", "xs", "lengths", "values")))


def encode(frame: Frame, mask: Mask, frame_index: Optional[int] = None) -> SparseForeground:
    """Runs of true mask pixels with the frame's raw values, in row-major order."""
    check_same_shape(frame, mask)
    bits = mask.bits
    h, w = bits.shape
    padded = np.zeros((h, w + 2), dtype=np.int8)
    padded[:, 1:-1] = bits
    step = np.diff(padded, axis=1)
    ys, xs = np.nonzero(step == 1)
    _, xe = np.nonzero(step == -1)
    return SparseForeground(frame.index if frame_index is None else frame_index,
                            ys, xs, xe - xs, frame.pixels[bits])


def decode(sf: SparseForeground, width: int, height: int) -> Frame:
    """Frame with the stored values at their pixels and zeros elsewhere."""
    sf.check(width, height)
    out = np.zeros(width * height, dtype=PIXEL_DTYPE)
    if sf.n_runs:
        lengths = sf.lengths.astype(np.int64)
        start = sf.ys.astype(np.int64) * width + sf.xs
        offset = np.repeat(start - (np.cumsum(lengths) - lengths), lengths)
        out[offset + np.arange(sf.n_pixels)] = sf.values
    return Frame(out.reshape(height, width), index=sf.frame_index)


def decoded_mask(sf: SparseForeground, width: int, height: int) -> Mask:
    """Pixel set covered by the runs."""
    sf.check(width, height)
    bits = np.zeros(width * height, dtype=bool)
    if sf.n_runs:
        lengths = sf.lengths.astype(np.int64)
        start = sf.ys.astype(np.int64) * width + sf.xs
        offset = np.repeat(start - (np.cumsum(lengths) - lengths), lengths)
        bits[offset + np.arange(sf.n_pixels)] = True
    return Mask(bits.reshape(height, width))


__all__ = ["SparseForeground", "encode", "decode", "decoded_mask"]
