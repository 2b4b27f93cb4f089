import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpbfseg.core import Frame
from lpbfseg.evaluation import evaluate, f1
from lpbfseg.groundtruth import Label
from lpbfseg.segmenters import make_segmenter, parse_name
from lpbfseg.tuning import (
    ParamRange, ParamSpace, TuneResult, default_space, random_search, sample_trials, score_many,
)

from .datasets import constructed_optimum
from .oracles import confusion_bruteforce


def sweep_f1(frames, gts, lam):
    tp = fp = fn = 0
    for f, g in zip(frames, gts):
        a, b, _, d = confusion_bruteforce(f.pixels > lam, g.labels)
        tp, fp, fn = tp + a, fp + b, fn + d
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


def test_constructed_optimum_interval_by_sweep():
    frames, gts = constructed_optimum()
    bg_max = max(float(f.pixels[g.labels == Label.BACKGROUND].max()) for f, g in zip(frames, gts))
    lams = np.linspace(250, 500, 501)
    perfect = [lam for lam in lams if sweep_f1(frames, gts, lam) == 1.0]
    assert min(perfect) >= bg_max and max(perfect) < 400
    assert all(sweep_f1(frames, gts, lam) == 1.0 for lam in (300.0, 350.0, 399.9))
    assert sweep_f1(frames, gts, 400.0) == 0.0


def test_random_search_finds_constructed_optimum():
    frames, gts = constructed_optimum()
    space = ParamSpace({"lambda": ParamRange(250, 500)})
    res = random_search("Thresh", space, frames, gts, trials=60, seed=3)
    assert 300 < res.best_params["lambda"] < 400
    assert res.best_f1 == 1.0
    assert res.best_f1 == max(t.f1 for t in res.trials)
    assert len(res.trials) == 60
    assert res.trials[res.best_index].params == res.best_params
    again = random_search("Thresh", space, frames, gts, trials=60, seed=3)
    assert again.to_dict() == res.to_dict()


def test_single_trial_returns_the_sample():
    frames, gts = constructed_optimum(n=4)
    space = default_space("Thresh")
    res = random_search("Thresh", space, frames, gts, trials=1, seed=11)
    assert res.best_params == sample_trials(space, 1, 11)[0]


def test_collapsed_space_returns_the_point():
    frames, gts = constructed_optimum(n=4)
    space = ParamSpace({"lambda": ParamRange(333.0, 333.0)})
    res = random_search("Thresh", space, frames, gts, trials=7, seed=0)
    assert res.best_params == {"lambda": 333.0}
    assert all(t.params == {"lambda": 333.0} for t in res.trials)


def test_ties_go_to_first_trial():
    frames, gts = constructed_optimum(n=4)
    res = random_search("Thresh", ParamSpace({"lambda": ParamRange(310, 390)}), frames, gts, trials=5, seed=0)
    assert all(t.f1 == 1.0 for t in res.trials)
    assert res.best_params == res.trials[0].params


def test_trial_prefix_is_stable_and_best_non_decreasing():
    space = default_space("MOG")
    a = sample_trials(space, 10, 5)
    b = sample_trials(space, 30, 5)
    assert a == b[:10]
    frames, gts = constructed_optimum(n=6)
    space = ParamSpace({"lambda": ParamRange(250, 500)})
    bests = [random_search("Thresh", space, frames, gts, trials=n, seed=9).best_f1 for n in (1, 3, 10, 30)]
    assert bests == sorted(bests)


spaces = st.sampled_from(["Thresh", "FD+Thresh", "SubMax", "MOG", "MOG2", "KNN", "AdaptMean", "Sauvola"])


@given(spaces, st.integers(0, 2**31))
def test_samples_lie_inside_ranges(name, seed):
    space = default_space(name)
    for p in sample_trials(space, 20, seed):
        assert space.contains(p)
        parse_name(name, params=p)


@given(st.floats(0.5, 100), st.floats(1, 1000), st.integers(0, 2**31))
def test_log_integer_and_odd_ranges(lo, span, seed):
    rng = np.random.default_rng(seed)
    r = ParamRange(lo, lo + span, "log", integer=True)
    if r.low <= np.floor(r.high) and np.ceil(r.low) <= r.high:
        v = r.sample(rng)
        assert isinstance(v, int) and r.contains(v)
    o = ParamRange(3, 3 + 2 * int(span), "log", odd=True)
    v = o.sample(rng)
    assert v % 2 == 1 and 3 <= v <= 3 + 2 * int(span)


@pytest.mark.parametrize("args", [
    (5, 1), (0, 10, "log"), (-1, 10, "log"), (0.2, 0.8, "linear", True), (4, 4, "linear", True, True),
    (1, 2, "cubic"), (0, float("inf")),
])
def test_invalid_ranges(args):
    with pytest.raises(ValueError):
        ParamRange(*args)


def test_invalid_space():
    with pytest.raises(ValueError):
        ParamSpace({})
    frames, gts = constructed_optimum(n=2)
    with pytest.raises(ValueError):
        random_search("Thresh", ParamSpace({"lambda": ParamRange(-10, -1)}), frames, gts, trials=2)
    with pytest.raises(ValueError):
        random_search("Thresh", None, frames, gts, trials=0)
    with pytest.raises(KeyError):
        default_space("Otsu")


def test_shared_difference_matches_separate_runs():
    rng = np.random.default_rng(1)
    frames, gts = constructed_optimum(n=8)
    frames = [Frame(np.maximum(f.pixels + rng.normal(0, 5, f.shape), 0).astype(np.float32), index=f.index)
              for f in frames]
    specs = [parse_name("FD+Thresh", params={"lambda": lam}) for lam in (1, 4.44, 20, 120)]
    specs += [parse_name("Thresh(300)"), parse_name("FD+Otsu"), parse_name("FD+SubMax(10)")]
    shared = score_many(specs, frames, gts)
    for spec, c in zip(specs, shared):
        _, alone = evaluate(make_segmenter(spec).run(frames), gts)
        assert c == alone


def test_tune_result_roundtrip(tmp_path):
    frames, gts = constructed_optimum(n=4)
    res = random_search("FD+Thresh", None, frames, gts, trials=5, seed=2)
    path = tmp_path / "r.json"
    res.save(path)
    back = TuneResult.load(path)
    assert back.to_dict() == res.to_dict()
    assert back.best_spec().params["lambda"] == res.best_params["lambda"]
    assert back.best_spec().fd_prefix
    assert f1(back.trials[back.best_index].counts).f1 == back.best_f1
