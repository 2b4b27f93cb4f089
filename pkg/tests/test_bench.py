import numpy as np
import pytest

from lpbfseg.bench import bench, bench_many, format_table, harness_overhead_ms, machine_info
from lpbfseg.core import Frame


def frames(n=200, shape=(256, 320), seed=0):
    rng = np.random.default_rng(seed)
    base = rng.uniform(250, 300, shape).astype(np.float32)
    return [Frame(base + np.float32(i % 7), index=i) for i in range(n)]


def test_report_fields():
    seq = frames(120)
    reports = bench_many(["Thresh", "FD+Thresh", "Otsu"], seq, warmup=20)
    for r in reports:
        assert r.frames_timed == 100 and r.warmup_frames_excluded == 20
        assert 0 <= r.median_ms <= r.p99_ms
        assert r.mean_ms >= 0
    d = reports[1].to_dict()
    assert d["algorithm"] == "FD+Thresh" and "lambda" in d["params"]
    text = format_table(reports, machine_info())
    assert "FD+Thresh" in text and "ms/image" in text


def test_single_bench_matches_protocol():
    r = bench("Thresh", frames(150))
    assert r.frames_timed == 100 and r.warmup_frames_excluded == 50


def test_too_few_frames():
    with pytest.raises(ValueError):
        bench("Thresh", frames(99), warmup=0)
    with pytest.raises(ValueError):
        bench("Thresh", frames(100), warmup=100)


def test_harness_overhead_is_small():
    seq = frames(300)
    thresh = min(bench("Thresh", seq).mean_ms for _ in range(3))
    overhead = min(harness_overhead_ms(seq) for _ in range(3))
    assert overhead < 0.05 * thresh
