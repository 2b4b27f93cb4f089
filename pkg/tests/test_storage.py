import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lpbfseg.core import CorruptRecordError, Frame, Mask, Rect, ShapeError, mask_apply
from lpbfseg.io import (
    SPARSE_HEADER, TAG_U16, GtSidecar, dense_nbytes, iter_sparse, read_sequence, read_sequence_header,
    read_sparse, write_sequence, write_sparse,
)
from lpbfseg.simulator import SimConfig, simulate
from lpbfseg.storage import SparseForeground, decode, decoded_mask, encode


def runs_bruteforce(bits):
    """Row-major runs found by walking every row."""
    out = []
    for y, row in enumerate(bits):
        x = 0
        while x < row.size:
            if row[x]:
                s = x
                while x < row.size and row[x]:
                    x += 1
                out.append((y, s, x - s))
            else:
                x += 1
    return out


def test_encode_examples():
    f = Frame(np.arange(4, dtype=np.float32).reshape(2, 2))
    assert encode(f, Mask.zeros(2, 2)).n_runs == 0
    sf = encode(f, Mask.full(2, 2))
    assert sf.n_runs == 2
    assert [(y, x, list(v)) for y, x, v in sf.runs] == [(0, 0, [0, 1]), (1, 0, [2, 3])]
    with pytest.raises(ShapeError):
        encode(f, Mask.zeros(3, 2))


def test_decode_examples():
    assert not decode(SparseForeground.from_runs(0, []), 8, 6).pixels.any()
    d = decode(SparseForeground.from_runs(4, [(3, 5, [301, 302])]), 10, 6)
    assert d.index == 4
    assert np.flatnonzero(d.pixels).tolist() == [35, 36]
    assert d.pixels[3, 5] == 301 and d.pixels[3, 6] == 302


@st.composite
def frame_and_mask(draw):
    h, w = draw(st.integers(1, 16)), draw(st.integers(1, 16))
    px = draw(arrays(np.float32, (h, w), elements=st.floats(0, 1e4, width=32)))
    bits = draw(arrays(bool, (h, w)))
    return Frame(px), Mask(bits)


@given(frame_and_mask())
def test_roundtrip_equals_mask_apply(fm):
    f, m = fm
    sf = encode(f, m)
    h, w = f.shape
    assert [(y, x, int(n)) for (y, x, _), n in zip(sf.runs, sf.lengths)] == runs_bruteforce(m.bits)
    np.testing.assert_array_equal(decode(sf, w, h).pixels, mask_apply(f, m).pixels)
    assert decoded_mask(sf, w, h) == m
    sf.check(w, h)


@pytest.mark.parametrize("runs, why", [
    ([(0, 0, [])], "zero-length"),
    ([(6, 0, [1])], "row out of range"),
    ([(0, 9, [1, 2])], "run past the right edge"),
    ([(1, 0, [1, 2]), (0, 0, [1])], "out of order"),
    ([(0, 0, [1, 2, 3]), (0, 2, [1])], "overlap"),
])
def test_check_rejects_bad_runs(runs, why):
    sf = SparseForeground.from_runs(0, runs)
    with pytest.raises(CorruptRecordError):
        sf.check(10, 6)
    with pytest.raises(CorruptRecordError):
        decode(sf, 10, 6)


def test_check_rejects_value_count_mismatch():
    sf = SparseForeground(0, [0], [0], [3], np.ones(2, np.float32))
    with pytest.raises(CorruptRecordError):
        sf.check(10, 6)
    with pytest.raises(CorruptRecordError):
        SparseForeground(0, [0, 1], [0], [1], np.ones(1, np.float32))


# -- files ----------------------------------------------------------------------------

def small_sim():
    return simulate(SimConfig(width=96, height=64, track_count=3, cross_section=Rect(10, 10, 85, 50),
                              warmup_frames=4, scan_speed=8, laser_off_gap_frames=2, seed=5))


def test_sequence_file_roundtrip(tmp_path):
    r = small_sim()
    path = tmp_path / "s.lpbf"
    hdr = write_sequence(path, r.sequence, warmup_count=4)
    assert path.stat().st_size == dense_nbytes(96, 64, len(r.sequence))
    assert read_sequence_header(path) == hdr
    back = read_sequence(path)
    assert back.warmup_count == 4 and len(back) == len(r.sequence)
    np.testing.assert_array_equal(np.asarray(back.data), r.sequence.data)
    with open(path, "r+b") as fh:
        fh.truncate(path.stat().st_size - 1)
    with pytest.raises(CorruptRecordError):
        read_sequence(path)


def test_sequence_header_layout(tmp_path):
    path = tmp_path / "s.lpbf"
    write_sequence(path, [Frame(np.ones((2, 3), np.float32))] * 2, warmup_count=1)
    raw = path.read_bytes()
    assert raw[:8] == b"LPBFSEQ1"
    assert struct.unpack("<IIIBI", raw[8:25]) == (3, 2, 2, 1, 1)
    assert len(raw) == 25 + 2 * 6 * 4


def test_u16_sequence(tmp_path):
    px = np.array([[0, 1, 65535]], np.float32)
    path = tmp_path / "u.lpbf"
    write_sequence(path, [Frame(px)], tag=TAG_U16)
    assert path.stat().st_size == dense_nbytes(3, 1, 1, TAG_U16)
    np.testing.assert_array_equal(read_sequence(path)[0].pixels, px)
    with pytest.raises(ValueError):
        write_sequence(tmp_path / "v.lpbf", [Frame(px + 0.5)], tag=TAG_U16)


def test_empty_sequence(tmp_path):
    path = tmp_path / "e.lpbf"
    write_sequence(path, [])
    assert len(read_sequence(path)) == 0


def records(seed=0, n=20, shape=(12, 17)):
    rng = np.random.default_rng(seed)
    for i in range(n):
        px = rng.uniform(0, 1000, shape).astype(np.float32)
        yield encode(Frame(px, index=i), Mask(rng.random(shape) < 0.2))


def test_sparse_file_roundtrip_and_layout(tmp_path):
    path = tmp_path / "r.sparse"
    assert write_sparse(path, records(), 17, 12) == 20
    hdr, back = read_sparse(path)
    assert (hdr.width, hdr.height, hdr.frame_count, hdr.tag) == (17, 12, 20, 1)
    assert back == list(records())
    raw = path.read_bytes()
    assert raw[:11] == b"LPBFSPARSE1"
    expected = SPARSE_HEADER.size + sum(8 + 12 * r.n_runs + 4 * r.n_pixels for r in records())
    assert len(raw) == expected


def test_sparse_u16_tag(tmp_path):
    recs = [SparseForeground.from_runs(0, [(1, 2, [300, 301])])]
    path = tmp_path / "u.sparse"
    write_sparse(path, recs, 8, 4, tag=TAG_U16)
    hdr, back = read_sparse(path)
    assert hdr.tag == TAG_U16 and back == recs
    assert path.stat().st_size == SPARSE_HEADER.size + 8 + 12 + 2 * 2


@pytest.mark.parametrize("damage", ["magic", "truncate", "trailing", "out_of_bounds", "huge_runs", "tag"])
def test_corrupt_sparse_files_raise(tmp_path, damage):
    path = tmp_path / "c.sparse"
    write_sparse(path, records(n=3), 17, 12)
    raw = bytearray(path.read_bytes())
    first = SPARSE_HEADER.size
    if damage == "magic":
        raw[0:1] = b"X"
    elif damage == "truncate":
        raw = raw[:-3]
    elif damage == "trailing":
        raw += b"\0"
    elif damage == "out_of_bounds":
        n_runs = struct.unpack_from("<I", raw, first + 4)[0]
        struct.pack_into("<I", raw, first + 8, 99)  # first run's row
        assert n_runs > 0
    elif damage == "huge_runs":
        struct.pack_into("<I", raw, first + 4, 2**31)
    elif damage == "tag":
        raw[23] = 7
    path.write_bytes(bytes(raw))
    with pytest.raises(CorruptRecordError):
        list(iter_sparse(path))


def test_sidecar_roundtrip(tmp_path):
    r = small_sim()
    side = GtSidecar(r.gt_config, r.centers, 96, 64, 10, {"note": 1})
    path = tmp_path / "g.json"
    side.save(path)
    back = GtSidecar.load(path)
    assert back.gt_config == r.gt_config and back.centers == r.centers
    for a, b in zip(back.ground_truth(), r.ground_truth):
        np.testing.assert_array_equal(a.labels, b.labels)
    path.write_text("{}")
    with pytest.raises(CorruptRecordError):
        GtSidecar.load(path)


def test_sparse_size_is_small_for_a_simulated_sequence(tmp_path):
    r = small_sim()
    path = tmp_path / "fg.sparse"
    write_sparse(path, (encode(f, Mask(g.foreground)) for f, g in zip(r.sequence, r.ground_truth)), 96, 64)
    assert path.stat().st_size < 0.2 * dense_nbytes(96, 64, len(r.sequence))
