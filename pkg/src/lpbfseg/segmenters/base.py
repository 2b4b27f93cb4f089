"""Segmenter specs, parameter presets and the streaming segmenter interface."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Callable, Optional

import numpy as np

from ..core import PIXEL_DTYPE, Frame, Mask, ShapeError

THRESH = "Thresh"
SUBMAX = "SubMax"
FD = "FD"
GLOBAL_AUTO = "GlobalAuto"
LOCAL_AUTO = "LocalAuto"
MOG = "MOG"
MOG2 = "MOG2"
KNN = "KNN"

# display name -> (algorithm, method)
_NAMES = {
    "thresh": (THRESH, None),
    "submax": (SUBMAX, None),
    "fd": (FD, None),
    "otsu": (GLOBAL_AUTO, "otsu"),
    "li": (GLOBAL_AUTO, "li"),
    "isodata": (GLOBAL_AUTO, "isodata"),
    "yen": (GLOBAL_AUTO, "yen"),
    "triangle": (GLOBAL_AUTO, "triangle"),
    "sauvola": (LOCAL_AUTO, "sauvola"),
    "adaptmean": (LOCAL_AUTO, "adapt_mean"),
    "adapt_mean": (LOCAL_AUTO, "adapt_mean"),
    "adaptgauss": (LOCAL_AUTO, "adapt_gauss"),
    "adapt_gauss": (LOCAL_AUTO, "adapt_gauss"),
    "mog": (MOG, None),
    "mog2": (MOG2, None),
    "knn": (KNN, None),
}

_DISPLAY = {
    ("GlobalAuto", "otsu"): "Otsu",
    ("GlobalAuto", "li"): "Li",
    ("GlobalAuto", "isodata"): "isodata",
    ("GlobalAuto", "yen"): "Yen",
    ("GlobalAuto", "triangle"): "Triangle",
    ("LocalAuto", "sauvola"): "Sauvola",
    ("LocalAuto", "adapt_mean"): "AdaptMean",
    ("LocalAuto", "adapt_gauss"): "AdaptGauss",
}

# the single scalar a "Name(value)" shorthand sets
_SHORTHAND = {THRESH: "lambda", SUBMAX: "delta"}

_PRESETS: Optional[dict] = None


def presets() -> dict:
    """Bundled default/calibrated parameter table, keyed by display name."""
    global _PRESETS
    if _PRESETS is None:
        text = resources.files("lpbfseg").joinpath("presets.json").read_text()
        _PRESETS = json.loads(text)
    return _PRESETS


class UnknownAlgorithmError(ValueError):
    pass


@dataclass(frozen=True)
class SegmenterSpec:
    """Algorithm identifier plus its parameter set.

    Missing parameters are filled from the bundled preset (``params_set``),
    so every tunable parameter of the algorithm is always present.
    """

    algorithm: str
    method: Optional[str] = None
    fd_prefix: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.algorithm not in _REGISTRY:
            raise UnknownAlgorithmError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == FD and self.fd_prefix:
            raise ValueError("FD cannot take a frame-differencing prefix")
        filled = dict(default_params(self.name))
        filled.update(self.params)
        object.__setattr__(self, "params", filled)
        validate_params(self.algorithm, filled)

    @property
    def base_name(self) -> str:
        return _DISPLAY.get((self.algorithm, self.method), self.algorithm)

    @property
    def name(self) -> str:
        return ("FD+" if self.fd_prefix else "") + self.base_name

    def with_params(self, **overrides: Any) -> "SegmenterSpec":
        p = dict(self.params)
        p.update(overrides)
        return SegmenterSpec(self.algorithm, self.method, self.fd_prefix, p)

    def to_dict(self) -> dict:
        return {"name": self.name, "algorithm": self.algorithm, "method": self.method,
                "fd_prefix": self.fd_prefix, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "SegmenterSpec":
        if "algorithm" in d:
            return cls(d["algorithm"], d.get("method"), bool(d.get("fd_prefix", False)), dict(d.get("params", {})))
        return parse_name(d["name"], params=d.get("params"))


def parse_name(text: str, params: Optional[dict] = None, params_set: str = "default") -> SegmenterSpec:
    """Parse ``"FD+Thresh"``, ``"Otsu"``, ``"SubMax(20)"``, ``"MOG2(history=50,thresh=9)"`` and the like.

    A bare value in parentheses sets the algorithm's main parameter (lambda or
    delta); ``name=value`` pairs set any parameter. Inline values win over ``params``.
    """
    m = re.fullmatch(r"\s*(FD\+)?\s*([A-Za-z_0-9]+)\s*(?:\(\s*([^)]*)\s*\))?\s*", text, flags=re.IGNORECASE)
    if not m:
        raise UnknownAlgorithmError(f"cannot parse algorithm name {text!r}")
    fd, base, arg = m.group(1), m.group(2), m.group(3)
    key = base.lower()
    if key in _NAMES:
        algorithm, method = _NAMES[key]
    elif base in _REGISTRY:
        algorithm, method = base, None
    else:
        raise UnknownAlgorithmError(f"unknown algorithm {base!r}; known: {', '.join(sorted(known_names()))}")
    display = ("FD+" if fd else "") + _DISPLAY.get((algorithm, method), algorithm)
    p = dict(preset_params(display, params_set))
    if params:
        p.update(params)
    if arg and "=" in arg:
        p.update(_keyword_args(arg))
    elif arg:
        if algorithm not in _SHORTHAND:
            raise ValueError(f"{base} takes no shorthand parameter")
        p[_SHORTHAND[algorithm]] = float(arg)
    return SegmenterSpec(algorithm, method, bool(fd), p)


def _keyword_args(arg: str) -> dict:
    out: dict[str, Any] = {}
    for item in arg.split(","):
        name, sep, value = (part.strip() for part in item.partition("="))
        if not sep or not name or not value:
            raise ValueError(f"expected name=value, got {item.strip()!r}")
        try:
            num = float(value)
        except ValueError:
            raise ValueError(f"parameter {name} needs a number, got {value!r}") from None
        out[name] = int(num) if num.is_integer() and "." not in value and "e" not in value.lower() else num
    return out


def known_names() -> list[str]:
    names = {THRESH, SUBMAX, FD, MOG, MOG2, KNN, *_DISPLAY.values()}
    names.update(n for n in _REGISTRY if n not in (GLOBAL_AUTO, LOCAL_AUTO))
    return sorted(names)


def _preset_entry(display: str) -> dict:
    table = presets()["algorithms"]
    if display in table:
        return table[display]
    base = display[3:] if display.startswith("FD+") else display
    return table.get(base, {})


def default_params(display: str) -> dict:
    return dict(_preset_entry(display).get("default", {}))


def preset_params(display: str, params_set: str = "default") -> dict:
    if params_set not in ("default", "calibrated"):
        raise ValueError(f"unknown parameter set {params_set!r}")
    entry = _preset_entry(display)
    p = dict(entry.get("default", {}))
    if params_set == "calibrated":
        p.update(entry.get("calibrated", {}))
    return p


def _odd_window(name: str, v: Any) -> None:
    if int(v) != v or v < 3 or int(v) % 2 == 0:
        raise ValueError(f"{name} must be an odd integer >= 3, got {v}")


def validate_params(algorithm: str, p: dict) -> None:
    def nonneg(name: str) -> None:
        if name in p and not (math.isfinite(p[name]) and p[name] >= 0):
            raise ValueError(f"{name} must be finite and >= 0, got {p[name]}")

    nonneg("lambda")
    nonneg("delta")
    if "box" in p:
        _odd_window("box", p["box"])
    if "history" in p and not p["history"] >= 1:
        raise ValueError(f"history must be >= 1, got {p['history']}")
    if "nmixtures" in p and not (int(p["nmixtures"]) == p["nmixtures"] and p["nmixtures"] >= 1):
        raise ValueError(f"nmixtures must be an integer >= 1, got {p['nmixtures']}")
    if "backRatio" in p and not 0 < p["backRatio"] <= 1:
        raise ValueError(f"backRatio must be in (0, 1], got {p['backRatio']}")
    if "nbins" in p and not p["nbins"] >= 2:
        raise ValueError("nbins must be >= 2")
    if "thresh" in p and not p["thresh"] > 0:
        raise ValueError("thresh must be > 0")


class Segmenter:
    """Streaming segmenter: feed frames of one sequence in order, get one mask per frame.

    Subclasses implement :meth:`_segment` on raw ``(h, w)`` float32 arrays.
    A segmenter instance owns its state and must not be shared across sequences.
    """

    def __init__(self, spec: SegmenterSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.shape: Optional[tuple[int, int]] = None
        self.frames_seen = 0

    def _check_shape(self, px: np.ndarray) -> None:
        if self.shape is None:
            self.shape = px.shape
        elif px.shape != self.shape:
            raise ShapeError(f"frame shape {px.shape} does not match earlier frames {self.shape}")

    def step(self, frame: Frame | np.ndarray) -> Mask:
        px = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=PIXEL_DTYPE)
        self._check_shape(px)
        self.frames_seen += 1
        return Mask._wrap(self._segment(px))

    def _segment(self, px: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def run(self, frames) -> list[Mask]:
        return [self.step(f) for f in frames]


class DiffStage:
    """Stateful ``clamp(cur - prev)`` with values <= 1 zeroed; ``None`` for the first frame.

    The returned array is a buffer reused on the next call.
    """

    PRE_THRESHOLD = 1.0

    def __init__(self, absolute: bool = False):
        self.absolute = absolute
        self.previous_frame: Optional[np.ndarray] = None
        self._diff: Optional[np.ndarray] = None
        self._keep: Optional[np.ndarray] = None

    def __call__(self, px: np.ndarray) -> Optional[np.ndarray]:
        prev, self.previous_frame = self.previous_frame, px
        if prev is None:
            self._diff = np.empty_like(px)
            self._keep = np.empty(px.shape, dtype=bool)
            return None
        diff = self._diff
        np.subtract(px, prev, out=diff)
        if self.absolute:
            np.abs(diff, out=diff)
        np.greater(diff, self.PRE_THRESHOLD, out=self._keep)
        np.multiply(diff, self._keep, out=diff)
        return diff


class FrameDifferencing(Segmenter):
    """Frame-differencing prefix: the :class:`DiffStage` output is handed to ``inner``.

    The first frame has no predecessor and yields an all-false mask; the inner
    segmenter does not see it.
    """

    PRE_THRESHOLD = DiffStage.PRE_THRESHOLD

    def __init__(self, spec: SegmenterSpec, inner: Segmenter, absolute: bool = False):
        super().__init__(spec, inner.seed)
        self.inner = inner
        self.stage = DiffStage(absolute)

    @property
    def previous_frame(self) -> Optional[np.ndarray]:
        return self.stage.previous_frame

    def _segment(self, px: np.ndarray) -> np.ndarray:
        diff = self.stage(px)
        if diff is None:
            return np.zeros(px.shape, dtype=bool)
        return self.inner.step(diff).bits


SegmenterFactory = Callable[[SegmenterSpec, int], Segmenter]
_REGISTRY: dict[str, SegmenterFactory] = {}


def register(name: str) -> Callable[[SegmenterFactory], SegmenterFactory]:
    """Register a segmenter factory under an algorithm name (plug-in hook)."""

    def deco(factory: SegmenterFactory) -> SegmenterFactory:
        _REGISTRY[name] = factory
        return factory

    return deco


def make_segmenter(spec: SegmenterSpec | str, seed: int = 0, absolute_fd: bool = False) -> Segmenter:
    """Fresh segmenter state for ``spec``; KNN's reservoir replacement is seeded by ``seed``."""
    if isinstance(spec, str):
        spec = parse_name(spec)
    inner = _REGISTRY[spec.algorithm](spec, seed)
    if spec.fd_prefix:
        return FrameDifferencing(spec, inner, absolute=absolute_fd)
    return inner
