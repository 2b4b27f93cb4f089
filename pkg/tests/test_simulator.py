import math

import numpy as np
import pytest

from lpbfseg.core import Frame, Rect
from lpbfseg.groundtruth import build_sequence_gt, compute_cutoff, locate_laser
from lpbfseg.simulator import (
    SimConfig, Simulation, analytic_track_width, calibration_batch, laser_schedule, simulate, spatter_batch,
    standard_batch,
)


def small(**kw):
    params = dict(width=160, height=96, track_count=6, cross_section=Rect(20, 20, 139, 60),
                  warmup_frames=5, scan_speed=8, laser_off_gap_frames=3, seed=1)
    params.update(kw)
    return SimConfig(**params)


def quiet(**kw):
    return small(bed_noise_sigma=0, bed_pattern_sigma=0, cutoff=265.0, **kw)


def test_reproducible_per_seed():
    a = simulate(small(spatter_rate=1.0))
    b = simulate(small(spatter_rate=1.0))
    np.testing.assert_array_equal(a.sequence.data, b.sequence.data)
    c = simulate(small(spatter_rate=1.0, seed=2))
    assert not np.array_equal(a.sequence.data, c.sequence.data)


def test_streaming_matches_batch():
    cfg = small()
    whole = simulate(cfg)
    sim = Simulation(cfg)
    for (f, g), ref, gref in zip(sim.stream(), whole.sequence, whole.ground_truth):
        assert f == ref
        np.testing.assert_array_equal(g.labels, gref.labels)


def test_frame_count_arithmetic():
    cfg = small()
    per_track = math.floor((139 - 20) / 8) + 1
    assert cfg.frames_per_track == per_track
    assert cfg.frame_count == 5 + 6 * per_track + 5 * 3
    r = simulate(cfg)
    assert len(r.sequence) == cfg.frame_count == len(r.ground_truth) == len(r.centers)
    assert r.sequence.warmup_count == 5
    assert list(r.sequence.laser_on) == [c is not None for c in r.centers]


def test_calibration_prefix():
    cfg = small(calibration_tracks=2)
    assert cfg.calibration_frame_count == 5 + 2 * (cfg.frames_per_track + 3)
    assert small(calibration_tracks=50).calibration_frame_count == small().frame_count


def test_quiet_warmup_is_bed_temperature():
    r = simulate(quiet())
    for f in r.sequence.warmup():
        assert np.all(f.pixels == 250.0)


def test_spot_center_reaches_peak():
    r = simulate(quiet())
    for f, c in zip(r.sequence, r.centers):
        if c is not None:
            assert f.pixels[int(c[1]), int(c[0])] == pytest.approx(600.0)


def test_laser_on_maxima_constant_without_noise():
    r = simulate(quiet())
    peaks = [f.pixels.max() for f, c in zip(r.sequence, r.centers) if c is not None]
    assert max(peaks) - min(peaks) <= 1.0


def test_analytic_width():
    assert analytic_track_width(3, 600 - 277, 295 - 277) == 14
    assert 2 * 3 * math.sqrt(2 * math.log(323 / 18)) == pytest.approx(14.418, abs=1e-3)
    cfg = SimConfig(width=80, height=80, bed_temp=277, peak_temp=600, spot_sigma=3, bed_noise_sigma=0,
                    bed_pattern_sigma=0, wake_fraction=0, track_count=1, cross_section=Rect(20, 40, 60, 40),
                    scan_speed=10, cutoff=295.0, warmup_frames=0)
    r = simulate(cfg)
    assert r.gt_config.track_width == 14
    for f, c in zip(r.sequence, r.centers):
        column = f.pixels[:, int(c[0])]
        assert abs(int((column > 295).sum()) - 14) <= 1
    with pytest.raises(ValueError):
        analytic_track_width(3, 323, 0)
    with pytest.raises(ValueError):
        analytic_track_width(3, 323, 400)


def test_hot_pixels_stay_inside_dilated_boxes():
    r = simulate(quiet())
    g = r.gt_config
    hot = np.zeros(r.sequence.data.shape[1:], bool)
    covered = np.zeros_like(hot)
    boxes = np.zeros_like(hot)
    for f, gt in zip(r.sequence, r.ground_truth):
        hot |= f.pixels > g.cutoff
        if gt.box is not None:
            boxes[gt.box.slices()] = True
            covered[gt.box.dilate(g.inner_buffer).clip(160, 96).slices()] = True
    assert hot.any()
    assert not (hot & ~covered).any()
    # boxes run a little past the ends of each track, so coverage is close to but below 1
    assert (boxes & hot).sum() / boxes.sum() > 0.85


def test_locate_laser_recovers_true_center():
    r = simulate(quiet())
    for f, c in zip(r.sequence, r.centers):
        p = locate_laser(f, r.gt_config.cutoff)
        if c is None:
            continue
        assert abs(p[0] - c[0]) <= 1 and abs(p[1] - c[1]) <= 1


def test_ground_truth_uses_true_schedule():
    cfg = small()
    r = simulate(cfg)
    assert r.centers == laser_schedule(cfg)
    ref = build_sequence_gt(r.centers, r.gt_config, cfg.width, cfg.height)
    for a, b in zip(ref, r.ground_truth):
        np.testing.assert_array_equal(a.labels, b.labels)
    assert r.gt_config.cutoff == pytest.approx(compute_cutoff(r.sequence.warmup())[0])


def test_spatter_adds_hot_specks():
    clean = simulate(small())
    dirty = simulate(small(spatter_rate=3.0, spatter_temp=400.0))
    diff = dirty.sequence.data != clean.sequence.data
    assert diff.any()
    assert np.all(dirty.sequence.data[diff] >= clean.sequence.data[diff])
    assert np.all(dirty.sequence.data[diff] == 400.0)


def test_config_validation():
    with pytest.raises(ValueError):
        small(peak_temp=200)
    with pytest.raises(ValueError):
        small(track_count=30)
    with pytest.raises(ValueError):
        small(cross_section=Rect(0, 0, 200, 50))
    with pytest.raises(ValueError):
        small(spot_sigma=0)
    with pytest.raises(ValueError):
        small(spatter_rate=-1)
    cfg = small()
    assert SimConfig.from_dict(cfg.to_dict()) == cfg


def test_batches():
    std = standard_batch()
    assert (std.width, std.height, std.track_count, std.seed, std.spatter_rate) == (640, 512, 40, 42, 0)
    cal = calibration_batch()
    assert cal.track_count == 20 and cal.seed != std.seed
    sp = spatter_batch()
    assert sp.spatter_rate == 0.5


def test_frames_are_valid():
    r = simulate(small(spatter_rate=1.0))
    for i, f in enumerate(r.sequence):
        assert isinstance(f, Frame) and f.index == i
        assert np.isfinite(f.pixels).all() and f.pixels.min() >= 0
