"""Per-frame wall-clock timing of segmenters.

Each ``step()`` call is timed on its own with ``time.perf_counter``: frame
decoding and any other I/O happen before the clock starts, and the mask is
materialized before it stops. The first ``warmup`` frames are run but not
counted. Everything runs in the calling thread.
"""

from __future__ import annotations

import os
import platform
import time
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Frame
from .segmenters import Segmenter, SegmenterSpec, make_segmenter, parse_name

DEFAULT_WARMUP = 50
MIN_FRAMES = 100


@dataclass(frozen=True)
class BenchReport:
    spec: SegmenterSpec
    frames_timed: int
    mean_ms: float
    median_ms: float
    p99_ms: float
    warmup_frames_excluded: int

    @classmethod
    def from_times(cls, spec: SegmenterSpec, seconds: Sequence[float], warmup: int) -> "BenchReport":
        ms = np.asarray(seconds, dtype=np.float64) * 1e3
        return cls(spec, int(ms.size), float(ms.mean()), float(np.median(ms)),
                   float(np.percentile(ms, 99)), warmup)

    def to_dict(self) -> dict:
        return {"algorithm": self.spec.name, "params": dict(self.spec.params),
                "frames_timed": self.frames_timed, "mean_ms": self.mean_ms,
                "median_ms": self.median_ms, "p99_ms": self.p99_ms,
                "warmup_frames_excluded": self.warmup_frames_excluded}


def machine_info() -> dict:
    return {"platform": platform.platform(), "processor": platform.processor() or platform.machine(),
            "python": platform.python_version(), "numpy": np.__version__, "cpu_count": os.cpu_count()}


def _as_spec(s: SegmenterSpec | str) -> SegmenterSpec:
    return parse_name(s) if isinstance(s, str) else s


def bench_many(specs: Sequence[SegmenterSpec | str], frames: Iterable[Frame], warmup: int = DEFAULT_WARMUP,
               seed: int = 0) -> list[BenchReport]:
    """Time several segmenters on one frame stream, handing each frame to all of them in turn.

    ``frames`` is consumed once, so a streaming source works; each segmenter
    still sees every frame in order.
    """
    specs = [_as_spec(s) for s in specs]
    segs = [make_segmenter(s, seed=seed) for s in specs]
    times: list[list[float]] = [[] for _ in specs]
    clock = time.perf_counter
    n = 0
    for frame in frames:
        for seg, t in zip(segs, times):
            t0 = clock()
            seg.step(frame)
            t1 = clock()
            if n >= warmup:
                t.append(t1 - t0)
        n += 1
    if n < max(MIN_FRAMES, warmup + 1):
        raise ValueError(f"benchmark needs at least {max(MIN_FRAMES, warmup + 1)} frames, got {n}")
    return [BenchReport.from_times(s, t, warmup) for s, t in zip(specs, times)]


def bench(spec: SegmenterSpec | str, seq: Iterable[Frame], warmup: int = DEFAULT_WARMUP, seed: int = 0) -> BenchReport:
    """Time one segmenter over a whole sequence."""
    return bench_many([spec], seq, warmup, seed)[0]


class _NoOp(Segmenter):
    def __init__(self):
        super().__init__(spec=None)  # type: ignore[arg-type]
        self._out = None

    def step(self, frame):  # type: ignore[override]
        return self._out


def harness_overhead_ms(frames: Sequence[Frame], repeats: int = 1) -> float:
    """Mean per-frame time of a segmenter that does nothing, measured by the same loop."""
    seg = _NoOp()
    clock = time.perf_counter
    times = []
    for _ in range(repeats):
        for frame in frames:
            t0 = clock()
            seg.step(frame)
            times.append(clock() - t0)
    return float(np.mean(times)) * 1e3 if times else 0.0


def format_table(reports: Sequence[BenchReport], info: Optional[dict] = None) -> str:
    """Plain-text table, one algorithm per row."""
    head = f"{'algorithm':<18} {'ms/image':>9} {'median':>9} {'p99':>9} {'frames':>7}"
    lines = [head, "-" * len(head)]
    for r in reports:
        lines.append(f"{r.spec.name:<18} {r.mean_ms:>9.3f} {r.median_ms:>9.3f} {r.p99_ms:>9.3f} {r.frames_timed:>7d}")
    if info:
        lines.append("")
        lines.extend(f"{k}: {v}" for k, v in info.items())
    return "\n".join(lines)


__all__ = ["BenchReport", "DEFAULT_WARMUP", "bench", "bench_many", "harness_overhead_ms",
           "machine_info", "format_table"]
