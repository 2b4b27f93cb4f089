"""Binary frame-sequence and sparse-foreground files, plus the ground-truth sidecar.

Sequence file (all integers little-endian, no padding)::

    offset  size  field
    0       8     magic b"LPBFSEQ1"
    8       4     u32 width
    12      4     u32 height
    16      4     u32 frame_count
    20      1     u8  dtype tag (0 = u16 raw counts, 1 = f32 intensities)
    21      4     u32 warmup_count
    25      ...   frame_count frames, each height*width values, row-major

Sparse file::

    0       11    magic b"LPBFSPARSE1"
    11      4     u32 width
    15      4     u32 height
    19      4     u32 frame_count
    23      1     u8  intensity tag (0 = u16, 1 = f32)
    24      ...   frame_count records:
                    u32 frame_index, u32 n_runs,
                    u32 ys[n_runs], u32 xs[n_runs], u32 lengths[n_runs],
                    values[sum(lengths)] (u16 or f32 per tag)
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional

import numpy as np

from .core import PIXEL_DTYPE, CorruptRecordError, Frame, FrameSequence, ShapeError
from .groundtruth import GtConfig, LazyGroundTruth
from .storage import SparseForeground

SEQ_MAGIC = b"LPBFSEQ1"
SEQ_HEADER = struct.Struct("<8sIIIBI")
SPARSE_MAGIC = b"LPBFSPARSE1"
SPARSE_HEADER = struct.Struct("<11sIIIB")
RECORD_HEADER = struct.Struct("<II")

TAG_U16, TAG_F32 = 0, 1
_TAG_DTYPES = {TAG_U16: np.dtype("<u2"), TAG_F32: np.dtype("<f4")}


def _dtype_for(tag: int) -> np.dtype:
    try:
        return _TAG_DTYPES[tag]
    except KeyError:
        raise CorruptRecordError(f"unknown intensity tag {tag}") from None


def _to_tag(values: np.ndarray, tag: int) -> np.ndarray:
    dt = _dtype_for(tag)
    if tag == TAG_U16:
        if values.size and (values.max() > 65535 or np.any(values != np.round(values))):
            raise ValueError("values are not representable as 16-bit raw counts")
    return values.astype(dt)


def dense_nbytes(width: int, height: int, frames: int, tag: int = TAG_F32) -> int:
    """Size of a sequence file with the given geometry."""
    return SEQ_HEADER.size + frames * width * height * _dtype_for(tag).itemsize


@dataclass(frozen=True)
class SequenceHeader:
    width: int
    height: int
    frame_count: int
    tag: int
    warmup_count: int


def write_sequence(path: str | Path, frames: Iterable[Frame], warmup_count: int = 0, tag: int = TAG_F32) -> SequenceHeader:
    """Stream frames to a sequence file; the frame count is patched in at the end."""
    _dtype_for(tag)
    n, shape = 0, None
    with open(path, "wb") as fh:
        fh.write(SEQ_HEADER.pack(SEQ_MAGIC, 0, 0, 0, tag, warmup_count))
        for f in frames:
            if shape is None:
                shape = f.shape
            elif f.shape != shape:
                raise ShapeError(f"frame {n} has shape {f.shape}, expected {shape}")
            fh.write(_to_tag(f.pixels, tag).tobytes())
            n += 1
        h, w = shape if shape is not None else (0, 0)
        fh.seek(0)
        fh.write(SEQ_HEADER.pack(SEQ_MAGIC, w, h, n, tag, warmup_count))
    return SequenceHeader(w, h, n, tag, warmup_count)


def read_sequence_header(path: str | Path) -> SequenceHeader:
    with open(path, "rb") as fh:
        raw = fh.read(SEQ_HEADER.size)
    if len(raw) < SEQ_HEADER.size:
        raise CorruptRecordError(f"{path}: truncated header")
    magic, w, h, n, tag, warm = SEQ_HEADER.unpack(raw)
    if magic != SEQ_MAGIC:
        raise CorruptRecordError(f"{path}: not a frame-sequence file")
    _dtype_for(tag)
    return SequenceHeader(w, h, n, tag, warm)


def read_sequence(path: str | Path, frame_rate: float = 60.0) -> FrameSequence:
    """Memory-mapped sequence; frames are converted to float32 when accessed."""
    hdr = read_sequence_header(path)
    expected = dense_nbytes(hdr.width, hdr.height, hdr.frame_count, hdr.tag)
    size = os.path.getsize(path)
    if size != expected:
        raise CorruptRecordError(f"{path}: {size} bytes, header implies {expected}")
    shape = (hdr.frame_count, hdr.height, hdr.width)
    if hdr.frame_count == 0 or hdr.width * hdr.height == 0:
        data = np.zeros(shape, dtype=_dtype_for(hdr.tag))
    else:
        data = np.memmap(path, dtype=_dtype_for(hdr.tag), mode="r", offset=SEQ_HEADER.size, shape=shape)
    return FrameSequence(data, frame_rate=frame_rate, warmup_count=hdr.warmup_count)


# -- sparse container -----------------------------------------------------------------

@dataclass(frozen=True)
class SparseHeader:
    width: int
    height: int
    frame_count: int
    tag: int


class SparseWriter:
    """Append records to a sparse file; the header's frame count is fixed up on close."""

    def __init__(self, path: str | Path, width: int, height: int, tag: int = TAG_F32):
        _dtype_for(tag)
        self.width, self.height, self.tag = width, height, tag
        self.count = 0
        self._fh: Optional[BinaryIO] = open(path, "wb")
        self._fh.write(SPARSE_HEADER.pack(SPARSE_MAGIC, width, height, 0, tag))

    def write(self, sf: SparseForeground) -> None:
        sf.check(self.width, self.height)
        fh = self._fh
        fh.write(RECORD_HEADER.pack(sf.frame_index, sf.n_runs))
        for a in (sf.ys, sf.xs, sf.lengths):
            fh.write(a.astype("<u4").tobytes())
        fh.write(_to_tag(sf.values, self.tag).tobytes())
        self.count += 1

    def close(self) -> None:
        if self._fh is None:
            return
        self._fh.seek(0)
        self._fh.write(SPARSE_HEADER.pack(SPARSE_MAGIC, self.width, self.height, self.count, self.tag))
        self._fh.close()
        self._fh = None

    def __enter__(self) -> "SparseWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_sparse(path: str | Path, records: Iterable[SparseForeground], width: int, height: int,
                 tag: int = TAG_F32) -> int:
    with SparseWriter(path, width, height, tag) as w:
        for sf in records:
            w.write(sf)
        return w.count


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    raw = fh.read(n)
    if len(raw) != n:
        raise CorruptRecordError(f"truncated {what}")
    return raw


def read_sparse_header(path: str | Path) -> SparseHeader:
    with open(path, "rb") as fh:
        return _sparse_header(fh)


def _sparse_header(fh: BinaryIO) -> SparseHeader:
    magic, w, h, n, tag = SPARSE_HEADER.unpack(_read_exact(fh, SPARSE_HEADER.size, "header"))
    if magic != SPARSE_MAGIC:
        raise CorruptRecordError("not a sparse-foreground file")
    _dtype_for(tag)
    return SparseHeader(w, h, n, tag)


def iter_sparse(path: str | Path) -> Iterator[SparseForeground]:
    """Records of a sparse file, each checked against the frame bounds."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        hdr = _sparse_header(fh)
        dt = _dtype_for(hdr.tag)
        for i in range(hdr.frame_count):
            index, n_runs = RECORD_HEADER.unpack(_read_exact(fh, RECORD_HEADER.size, f"record {i}"))
            if 12 * n_runs > size - fh.tell():
                raise CorruptRecordError(f"record {i}: run table exceeds the file")
            tables = np.frombuffer(_read_exact(fh, 12 * n_runs, f"record {i} runs"), dtype="<u4").reshape(3, n_runs)
            total = int(tables[2].sum(dtype=np.int64))
            if total * dt.itemsize > size - fh.tell():
                raise CorruptRecordError(f"record {i}: values exceed the file")
            values = np.frombuffer(_read_exact(fh, total * dt.itemsize, f"record {i} values"), dtype=dt)
            sf = SparseForeground(index, tables[0], tables[1], tables[2], values.astype(PIXEL_DTYPE))
            sf.check(hdr.width, hdr.height)
            yield sf
        if fh.read(1):
            raise CorruptRecordError("trailing bytes after the last record")


def read_sparse(path: str | Path) -> tuple[SparseHeader, list[SparseForeground]]:
    return read_sparse_header(path), list(iter_sparse(path))


# -- ground-truth sidecar -------------------------------------------------------------

def sidecar_path(seq_path: str | Path) -> Path:
    p = Path(seq_path)
    return p.with_name(p.name + ".gt.json")


@dataclass
class GtSidecar:
    """Per-frame laser centers and box geometry; labels are rebuilt on demand."""

    gt_config: GtConfig
    centers: list
    width: int
    height: int
    calibration_frames: Optional[int] = None
    extra: Optional[dict] = None

    def ground_truth(self) -> LazyGroundTruth:
        return LazyGroundTruth(self.centers, self.gt_config, self.width, self.height)

    def to_dict(self) -> dict:
        return {"gt_config": self.gt_config.to_dict(), "width": self.width, "height": self.height,
                "calibration_frames": self.calibration_frames,
                "laser_centers": [None if c is None else [c[0], c[1]] for c in self.centers],
                "extra": self.extra or {}}

    @classmethod
    def from_dict(cls, d: dict) -> "GtSidecar":
        centers = [None if c is None else (float(c[0]), float(c[1])) for c in d["laser_centers"]]
        return cls(GtConfig.from_dict(d["gt_config"]), centers, int(d["width"]), int(d["height"]),
                   d.get("calibration_frames"), d.get("extra") or {})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "GtSidecar":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptRecordError(f"{path}: invalid ground-truth sidecar ({e})") from e


__all__ = [
    "SEQ_MAGIC", "SPARSE_MAGIC", "TAG_U16", "TAG_F32", "SequenceHeader", "SparseHeader", "GtSidecar",
    "dense_nbytes", "write_sequence", "read_sequence", "read_sequence_header", "SparseWriter",
    "write_sparse", "read_sparse", "read_sparse_header", "iter_sparse", "sidecar_path",
]
