"""Synthetic raster-scan sequences with exact ground truth.

A Gaussian laser spot sweeps parallel left-to-right scan lines over a powder bed.
The swept path leaves a wake that cools exponentially. The bed carries a static
texture plus per-frame sensor noise, and optional spatter adds short-lived hot
specks that drift across the frame.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterator, Optional

import numpy as np

from .core import PIXEL_DTYPE, Frame, FrameSequence, Rect
from .groundtruth import GroundTruth, GtConfig, build_gt, compute_cutoff

Point = tuple[float, float]


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters. Temperatures share one intensity scale.

    ``bed_noise_sigma`` is independent per pixel and frame; ``bed_pattern_sigma``
    is a static per-pixel texture drawn once per sequence. ``wake_fraction`` sets the
    freshly swept track temperature as a fraction of the spot amplitude. When
    ``cutoff`` is None it is derived from the warmup frames.
    """

    width: int = 640
    height: int = 512
    bed_temp: float = 250.0
    bed_noise_sigma: float = 0.2
    bed_pattern_sigma: float = 6.0
    peak_temp: float = 600.0
    spot_sigma: float = 2.0
    scan_speed: float = 16.0
    track_pitch: float = 4.0
    track_count: int = 40
    cross_section: Optional[Rect] = None
    cooling_time_constant: float = 60.0
    wake_fraction: float = 0.115
    warmup_frames: int = 50
    laser_off_gap_frames: int = 5
    spatter_rate: float = 0.0
    spatter_temp: float = 280.0
    spatter_speed: float = 6.0
    seed: int = 0
    calibration_tracks: int = 20
    cutoff: Optional[float] = None
    frame_rate: float = 60.0

    def __post_init__(self) -> None:
        if self.cross_section is None:
            span_y = int(math.ceil((self.track_count - 1) * self.track_pitch))
            x0 = self.width // 2 - 200 if self.width >= 480 else self.width // 4
            x1 = self.width - 1 - x0
            y0 = max((self.height - span_y) // 2, 0)
            object.__setattr__(self, "cross_section", Rect(x0, y0, x1, y0 + span_y))
        elif not isinstance(self.cross_section, Rect):
            object.__setattr__(self, "cross_section", Rect.from_list(self.cross_section))
        self.validate()

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("frame dimensions must be positive")
        if not self.peak_temp > self.bed_temp:
            raise ValueError("peak_temp must exceed bed_temp")
        if self.bed_temp < 0:
            raise ValueError("bed_temp must be >= 0")
        for name in ("spot_sigma", "scan_speed", "cooling_time_constant"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.track_count < 1 or self.track_pitch < 0:
            raise ValueError("need at least one track and a non-negative pitch")
        for name in ("bed_noise_sigma", "bed_pattern_sigma", "spatter_rate", "warmup_frames",
                     "laser_off_gap_frames", "wake_fraction", "spatter_speed"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.cross_section.within(self.width, self.height):
            raise ValueError(f"cross-section {self.cross_section} outside the {self.width}x{self.height} frame")
        if self.track_y(self.track_count - 1) > self.cross_section.y1 + 0.5:
            raise ValueError("tracks do not fit inside the cross-section")

    @property
    def amplitude(self) -> float:
        return self.peak_temp - self.bed_temp

    def track_y(self, k: int) -> float:
        return self.cross_section.y0 + k * self.track_pitch

    def track_xs(self) -> np.ndarray:
        cs = self.cross_section
        n = int(math.floor((cs.x1 - cs.x0) / self.scan_speed)) + 1
        return cs.x0 + self.scan_speed * np.arange(n)

    @property
    def frames_per_track(self) -> int:
        return len(self.track_xs())

    @property
    def frame_count(self) -> int:
        return (self.warmup_frames + self.track_count * self.frames_per_track
                + (self.track_count - 1) * self.laser_off_gap_frames)

    @property
    def calibration_frame_count(self) -> int:
        """Length of the prefix covering the first ``calibration_tracks`` tracks."""
        k = min(self.calibration_tracks, self.track_count)
        return min(self.frame_count, self.warmup_frames + k * (self.frames_per_track + self.laser_off_gap_frames))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cross_section"] = self.cross_section.to_list()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if d.get("cross_section") is not None:
            d["cross_section"] = Rect.from_list(d["cross_section"])
        return cls(**d)


def analytic_track_width(spot_sigma: float, amplitude: float, cutoff_excess: float) -> int:
    """Diameter of the region where a Gaussian spot exceeds the cutoff, rounded to pixels."""
    if cutoff_excess <= 0:
        raise ValueError("cutoff must lie above the bed temperature")
    if cutoff_excess >= amplitude:
        raise ValueError("cutoff must lie below the spot peak")
    w = 2.0 * spot_sigma * math.sqrt(2.0 * math.log(amplitude / cutoff_excess))
    return max(1, int(math.floor(w + 0.5)))


def laser_schedule(cfg: SimConfig) -> list[Optional[Point]]:
    """Exact laser center for every frame (None while the laser is off)."""
    xs = cfg.track_xs()
    out: list[Optional[Point]] = [None] * cfg.warmup_frames
    for k in range(cfg.track_count):
        y = cfg.track_y(k)
        out.extend((float(x), float(y)) for x in xs)
        if k < cfg.track_count - 1:
            out.extend([None] * cfg.laser_off_gap_frames)
    return out


@dataclass
class _Particle:
    x: float
    y: float
    vx: float
    vy: float
    size: int
    life: int


@dataclass
class SimResult:
    sequence: FrameSequence
    ground_truth: list[GroundTruth]
    gt_config: GtConfig
    centers: list[Optional[Point]]
    cutoff_stats: tuple[float, float, float]

    def __iter__(self):
        # unpacks as (sequence, ground_truth, gt_config)
        return iter((self.sequence, self.ground_truth, self.gt_config))


class Simulation:
    """Streaming generator; call :meth:`frames` for frames and :meth:`stream` for (frame, gt) pairs."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.centers = laser_schedule(cfg)
        self._warmup: Optional[list[Frame]] = None
        self._gt_config: Optional[GtConfig] = None
        self.cutoff_stats: Optional[tuple[float, float, float]] = None

    # -- rendering --------------------------------------------------------------------

    def _render(self) -> Iterator[Frame]:
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed)
        h, w = cfg.height, cfg.width
        base = np.full((h, w), cfg.bed_temp, dtype=PIXEL_DTYPE)
        if cfg.bed_pattern_sigma > 0:
            base += rng.standard_normal((h, w), dtype=PIXEL_DTYPE) * PIXEL_DTYPE(cfg.bed_pattern_sigma)
        spatter_rng = np.random.default_rng([cfg.seed, 1])

        sig = cfg.spot_sigma
        reach = int(math.ceil(5 * sig))
        cs = cfg.cross_section
        region = Rect(cs.x0 - reach, cs.y0 - reach, cs.x1 + reach, cs.y1 + reach).clip(w, h)
        rs = region.slices()
        wake = np.zeros((region.height, region.width), dtype=PIXEL_DTYPE)
        decay = PIXEL_DTYPE(math.exp(-1.0 / cfg.cooling_time_constant))
        amp = cfg.amplitude
        wake_amp = cfg.wake_fraction * amp
        particles: list[_Particle] = []
        prev: Optional[Point] = None

        for i, center in enumerate(self.centers):
            frame = base.copy()
            if cfg.bed_noise_sigma > 0:
                frame += rng.standard_normal((h, w), dtype=PIXEL_DTYPE) * PIXEL_DTYPE(cfg.bed_noise_sigma)
            wake *= decay
            heat = wake.copy()
            if center is not None:
                start = prev if prev is not None and prev[1] == center[1] else center
                self._deposit_wake(wake, region, start, center, wake_amp, sig, reach)
                np.maximum(heat, wake, out=heat)
                self._stamp_spot(heat, region, center, amp, sig, reach)
            frame[rs] += heat
            if cfg.spatter_rate > 0:
                particles = self._spatter(frame, particles, spatter_rng)
            np.maximum(frame, 0, out=frame)
            prev = center
            yield Frame(frame, index=i, laser_nominally_on=center is not None)

    @staticmethod
    def _patch(region: Rect, x0: float, y0: float, x1: float, y1: float, reach: int):
        px0 = max(int(math.floor(min(x0, x1))) - reach, region.x0)
        px1 = min(int(math.ceil(max(x0, x1))) + reach, region.x1)
        py0 = max(int(math.floor(min(y0, y1))) - reach, region.y0)
        py1 = min(int(math.ceil(max(y0, y1))) + reach, region.y1)
        if px0 > px1 or py0 > py1:
            return None
        ys = np.arange(py0, py1 + 1, dtype=np.float64)[:, None]
        xs = np.arange(px0, px1 + 1, dtype=np.float64)[None, :]
        sl = (slice(py0 - region.y0, py1 - region.y0 + 1), slice(px0 - region.x0, px1 - region.x0 + 1))
        return xs, ys, sl

    def _deposit_wake(self, wake, region, start: Point, end: Point, wake_amp, sig, reach) -> None:
        p = self._patch(region, start[0], start[1], end[0], end[1], reach)
        if p is None or wake_amp <= 0:
            return
        xs, ys, sl = p
        lo, hi = min(start[0], end[0]), max(start[0], end[0])
        dx = np.where(xs < lo, lo - xs, np.where(xs > hi, xs - hi, 0.0))
        dy = ys - end[1]
        dep = (wake_amp * np.exp(-(dx * dx + dy * dy) / (2 * sig * sig))).astype(PIXEL_DTYPE)
        np.maximum(wake[sl], dep, out=wake[sl])

    def _stamp_spot(self, heat, region, center: Point, amp, sig, reach) -> None:
        p = self._patch(region, center[0], center[1], center[0], center[1], reach)
        if p is None:
            return
        xs, ys, sl = p
        spot = (amp * np.exp(-((xs - center[0]) ** 2 + (ys - center[1]) ** 2) / (2 * sig * sig))).astype(PIXEL_DTYPE)
        np.maximum(heat[sl], spot, out=heat[sl])

    def _spatter(self, frame: np.ndarray, particles: list[_Particle], rng: np.random.Generator) -> list[_Particle]:
        cfg = self.cfg
        h, w = frame.shape
        for _ in range(rng.poisson(cfg.spatter_rate)):
            v = cfg.spatter_speed
            particles.append(_Particle(x=rng.uniform(0, w), y=rng.uniform(0, h),
                                       vx=rng.uniform(-v, v), vy=rng.uniform(-v, v),
                                       size=int(rng.integers(1, 4)), life=int(rng.integers(1, 4))))
        alive = []
        for p in particles:
            x0, y0 = int(p.x), int(p.y)
            ys, xs = slice(max(y0, 0), min(y0 + p.size, h)), slice(max(x0, 0), min(x0 + p.size, w))
            np.maximum(frame[ys, xs], cfg.spatter_temp, out=frame[ys, xs])
            p.x += p.vx
            p.y += p.vy
            p.life -= 1
            if p.life > 0:
                alive.append(p)
        return alive

    # -- public API -------------------------------------------------------------------

    def _ensure_warmup(self) -> Iterator[Frame]:
        it = self._render()
        if self._warmup is None:
            self._warmup = [next(it) for _ in range(self.cfg.warmup_frames)]
        else:
            for _ in range(self.cfg.warmup_frames):
                next(it)
        return it

    @property
    def gt_config(self) -> GtConfig:
        if self._gt_config is None:
            cfg = self.cfg
            if cfg.cutoff is not None:
                cutoff = float(cfg.cutoff)
                self.cutoff_stats = (cutoff, float("nan"), float("nan"))
            else:
                if cfg.warmup_frames == 0:
                    raise ValueError("cutoff must be given when there are no warmup frames")
                self._ensure_warmup()
                self.cutoff_stats = compute_cutoff(self._warmup)
                cutoff = self.cutoff_stats[0]
            w = analytic_track_width(cfg.spot_sigma, cfg.amplitude, cutoff - cfg.bed_temp)
            self._gt_config = GtConfig(track_width=w, cutoff=cutoff, cross_section=cfg.cross_section)
        return self._gt_config

    def frames(self) -> Iterator[Frame]:
        if self._warmup is not None:
            it = self._ensure_warmup()
            yield from self._warmup
            yield from it
        else:
            yield from self._render()

    def ground_truth(self) -> Iterator[GroundTruth]:
        gcfg = self.gt_config
        prev = None
        for c in self.centers:
            yield build_gt(prev, c, gcfg, self.cfg.width, self.cfg.height)
            prev = c

    def stream(self) -> Iterator[tuple[Frame, GroundTruth]]:
        self.gt_config  # fixes the cutoff before frames are produced
        yield from zip(self.frames(), self.ground_truth())


def simulate(cfg: SimConfig) -> SimResult:
    """Render the whole sequence in memory together with its ground truth."""
    sim = Simulation(cfg)
    gcfg = sim.gt_config
    frames = list(sim.frames())
    seq = FrameSequence.from_frames(frames, frame_rate=cfg.frame_rate, warmup_count=cfg.warmup_frames)
    return SimResult(seq, list(sim.ground_truth()), gcfg, sim.centers, sim.cutoff_stats)


def standard_batch(seed: int = 42, **overrides) -> SimConfig:
    """640x512, 40 scan lines, no spatter: the reference evaluation batch."""
    return SimConfig(**{"seed": seed, **overrides})


def calibration_batch(seed: int = 7, **overrides) -> SimConfig:
    """Same machine settings as :func:`standard_batch`, 20 scan lines, another seed."""
    return SimConfig(**{"seed": seed, "track_count": 20, "calibration_tracks": 20, **overrides})


def spatter_batch(seed: int = 3, **overrides) -> SimConfig:
    """Small low-resolution frame with frequent faint spatter, scanning an upper-left square."""
    params = dict(width=96, height=96, spot_sigma=1.0, scan_speed=6.0, track_pitch=2.0,
                  track_count=16, cross_section=Rect(12, 12, 47, 42), spatter_rate=0.5, spatter_temp=265.0,
                  laser_off_gap_frames=3, seed=seed)
    params.update(overrides)
    return SimConfig(**params)
