"""Random-search calibration of segmenter parameters against ground truth.

Each trial draws one parameter set, runs a fresh segmenter over the whole
calibration sequence in frame order and is scored by micro-averaged F1.
Trial ``i`` draws from its own generator seeded with ``(seed, i)``, so the
first ``n`` trials are the same whatever the total trial count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .core import Frame
from .evaluation import ConfusionCounts, GtView, confusion, f1
from .groundtruth import GroundTruth
from .segmenters import DiffStage, SegmenterSpec, make_segmenter, parse_name
from .segmenters.base import validate_params

SCALES = ("linear", "log")


@dataclass(frozen=True)
class ParamRange:
    """Closed sampling interval for one parameter.

    ``low == high`` pins the parameter. ``odd`` restricts integers to odd values
    (window sizes).
    """

    low: float
    high: float
    scale: str = "linear"
    integer: bool = False
    odd: bool = False

    def __post_init__(self) -> None:
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if not (math.isfinite(self.low) and math.isfinite(self.high)):
            raise ValueError("range bounds must be finite")
        if self.low > self.high:
            raise ValueError(f"empty range [{self.low}, {self.high}]")
        if self.scale == "log" and self.low <= 0:
            raise ValueError("log-scaled ranges need low > 0")
        if self.odd and not self.integer:
            object.__setattr__(self, "integer", True)
        if self.integer and not self._choices_bounds()[0] <= self._choices_bounds()[1]:
            raise ValueError(f"range [{self.low}, {self.high}] holds no admissible integer")

    def _choices_bounds(self) -> tuple[int, int]:
        lo, hi = math.ceil(self.low), math.floor(self.high)
        if self.odd:
            lo += 1 - lo % 2
            hi -= 1 - hi % 2
        return lo, hi

    def sample(self, rng: np.random.Generator) -> float | int:
        if not self.integer:
            if self.low == self.high:
                return float(self.low)
            if self.scale == "log":
                return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
            return float(rng.uniform(self.low, self.high))
        lo, hi = self._choices_bounds()
        step = 2 if self.odd else 1
        n = (hi - lo) // step + 1
        if self.scale == "linear" or n == 1:
            return int(lo + step * rng.integers(n))
        # log-uniform over the admissible integers: each value owns [v, v + step) in log space
        u = math.exp(rng.uniform(math.log(lo), math.log(hi + step)))
        return int(min(hi, lo + step * math.floor((u - lo) / step)))

    def contains(self, v: float) -> bool:
        if self.integer:
            lo, hi = self._choices_bounds()
            return float(v).is_integer() and lo <= v <= hi and (not self.odd or int(v) % 2 == 1)
        return self.low <= v <= self.high

    def to_dict(self) -> dict:
        return {"low": self.low, "high": self.high, "scale": self.scale,
                "integer": self.integer, "odd": self.odd}

    @classmethod
    def from_value(cls, v: Any) -> "ParamRange":
        if isinstance(v, ParamRange):
            return v
        if isinstance(v, dict):
            return cls(**v)
        return cls(*v)


@dataclass(frozen=True)
class ParamSpace:
    ranges: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.ranges:
            raise ValueError("parameter space is empty")
        object.__setattr__(self, "ranges", {k: ParamRange.from_value(v) for k, v in self.ranges.items()})

    def sample(self, rng: np.random.Generator) -> dict:
        return {name: self.ranges[name].sample(rng) for name in sorted(self.ranges)}

    def contains(self, params: dict) -> bool:
        return all(name in params and r.contains(params[name]) for name, r in self.ranges.items())

    def to_dict(self) -> dict:
        return {k: r.to_dict() for k, r in self.ranges.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamSpace":
        return cls(dict(d))


_R = ParamRange

# Search ranges per algorithm. Each brackets the library default and the
# calibrated value of the bundled presets, except for nmixtures (see README).
_SPACES: dict[str, dict[str, ParamRange]] = {
    "Thresh": {"lambda": _R(250, 500)},
    "FD+Thresh": {"lambda": _R(1, 50, "log")},
    "SubMax": {"delta": _R(1, 200, "log")},
    "FD+SubMax": {"delta": _R(1, 200, "log")},
    "MOG": {"backRatio": _R(0.05, 1.0), "history": _R(1, 500, "log", True), "nmixtures": _R(1, 10, integer=True)},
    "MOG2": {"history": _R(1, 700, "log", True), "thresh": _R(0.5, 50, "log")},
    "KNN": {"history": _R(1, 700, "log", True), "thresh": _R(1, 1000, "log")},
    "AdaptMean": {"box": _R(3, 501, "log", odd=True), "C": _R(-20, 100)},
    "AdaptGauss": {"box": _R(3, 501, "log", odd=True), "C": _R(-20, 100)},
    "Sauvola": {"box": _R(3, 501, "log", odd=True), "k": _R(0.01, 1.0)},
}


def default_space(spec: SegmenterSpec | str) -> ParamSpace:
    """Bundled search space for an algorithm; raises KeyError for parameter-free ones."""
    if isinstance(spec, str):
        spec = parse_name(spec)
    table = _SPACES.get(spec.name) or _SPACES.get(spec.base_name)
    if table is None:
        raise KeyError(f"{spec.name} has no tunable parameters")
    return ParamSpace(dict(table))


@dataclass
class Trial:
    params: dict
    f1: float
    counts: Optional[ConfusionCounts] = None


@dataclass
class TuneResult:
    spec: SegmenterSpec
    best_params: dict
    best_f1: float
    trials: list[Trial]
    seed: int = 0
    space: Optional[ParamSpace] = None

    @property
    def best_index(self) -> int:
        return int(np.argmax([t.f1 for t in self.trials]))

    def best_spec(self) -> SegmenterSpec:
        return self.spec.with_params(**self.best_params)

    def to_dict(self) -> dict:
        return {
            "algorithm": self.spec.name,
            "spec": self.spec.to_dict(),
            "best_params": self.best_params,
            "best_f1": self.best_f1,
            "seed": self.seed,
            "space": self.space.to_dict() if self.space else None,
            "trials": [{"params": t.params, "f1": t.f1,
                        "counts": t.counts.to_dict() if t.counts else None} for t in self.trials],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TuneResult":
        trials = [Trial(t["params"], t["f1"], ConfusionCounts(**t["counts"]) if t.get("counts") else None)
                  for t in d["trials"]]
        space = ParamSpace.from_dict(d["space"]) if d.get("space") else None
        return cls(SegmenterSpec.from_dict(d["spec"]), dict(d["best_params"]), float(d["best_f1"]),
                   trials, int(d.get("seed", 0)), space)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TuneResult":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sample_trials(space: ParamSpace, trials: int, seed: int) -> list[dict]:
    """Parameter sets of trials ``0 .. trials-1``; trial ``i`` depends on ``(seed, i)`` only."""
    return [space.sample(np.random.default_rng([seed, i])) for i in range(trials)]


def _concurrency(spec: SegmenterSpec) -> int:
    # model-based segmenters hold several frame-sized arrays each
    return 1 if spec.algorithm in ("MOG", "MOG2", "KNN") else 64


def score_many(specs: Sequence[SegmenterSpec], frames: Sequence[Frame], gt: Sequence[GroundTruth],
               seed: int = 0, concurrency: Optional[int] = None) -> list[ConfusionCounts]:
    """Micro-summed confusion counts of each spec over one sequence.

    Specs that share a frame-differencing prefix also share the difference image,
    which gives the same masks as running each one separately.
    """
    if len(frames) != len(gt):
        raise ValueError(f"{len(frames)} frames but {len(gt)} ground-truth frames")
    specs = list(specs)
    if not specs:
        return []
    group = concurrency or min(_concurrency(s) for s in specs)
    out: list[ConfusionCounts] = []
    for start in range(0, len(specs), group):
        out.extend(_score_group(specs[start:start + group], frames, gt, seed))
    return out


def _score_group(specs: list[SegmenterSpec], frames, gt, seed: int) -> list[ConfusionCounts]:
    fd = [s.fd_prefix for s in specs]
    segs = []
    for s in specs:
        inner = SegmenterSpec(s.algorithm, s.method, False, s.params) if s.fd_prefix else s
        segs.append(make_segmenter(inner, seed=seed))
    stage = DiffStage() if any(fd) else None
    totals = [ConfusionCounts() for _ in specs]
    for frame, g in zip(frames, gt):
        view = GtView(g)
        px = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float32)
        diff = stage(px) if stage is not None else None
        first = stage is not None and diff is None
        for i, seg in enumerate(segs):
            if fd[i]:
                if first:
                    # all-false mask: every foreground pixel is missed, nothing else counts
                    totals[i] = totals[i] + ConfusionCounts(0, 0, view.n_bg, view.n_fg)
                    continue
                m = seg.step(diff)
            else:
                m = seg.step(px)
            totals[i] = totals[i] + confusion(m, view)
    return totals


def random_search(spec: SegmenterSpec | str, space: Optional[ParamSpace], calib: Sequence[Frame],
                  gt: Sequence[GroundTruth], trials: int = 300, seed: int = 0,
                  segmenter_seed: int = 0) -> TuneResult:
    """Best of ``trials`` random parameter sets by micro-F1 on ``calib``.

    Parameters outside ``space`` keep the values in ``spec``. Ties go to the
    lowest trial index. ``calib`` is iterated once per group of concurrently
    evaluated trials, so it must be re-iterable (a list or FrameSequence).
    """
    if isinstance(spec, str):
        spec = parse_name(spec)
    if space is None:
        space = default_space(spec)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    params = sample_trials(space, trials, seed)
    specs = []
    for p in params:
        merged = dict(spec.params)
        merged.update(p)
        validate_params(spec.algorithm, merged)
        specs.append(spec.with_params(**p))
    counts = score_many(specs, calib, gt, seed=segmenter_seed)
    results = [Trial(p, f1(c).f1, c) for p, c in zip(params, counts)]
    best = int(np.argmax([t.f1 for t in results]))
    return TuneResult(spec, dict(results[best].params), results[best].f1, results, seed, space)


__all__ = ["ParamRange", "ParamSpace", "Trial", "TuneResult", "default_space", "random_search",
           "sample_trials", "score_many"]
