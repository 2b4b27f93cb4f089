"""``lpbfseg`` command-line tool.

Verbs: simulate, segment, evaluate, tune, bench, compress, spatter. Every verb
accepts ``--config FILE`` (JSON); values given on the command line win over the
file. Outputs go to ``--out DIR`` and are removed again if the command fails.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .bench import bench_many, format_table, machine_info
from .core import CorruptRecordError, FrameSequence, Mask, Rect
from .evaluation import CompositeAccumulator, ScoreAccumulator, GtView, spatter_outside_fraction
from .groundtruth import GtConfig, compute_cutoff, estimate_track_width, locate_laser
from .io import (GtSidecar, SparseWriter, dense_nbytes, iter_sparse, read_sequence, read_sequence_header,
                 read_sparse_header, sidecar_path, write_sequence)
from .segmenters import SegmenterSpec, UnknownAlgorithmError, make_segmenter, parse_name
from .simulator import Simulation, calibration_batch, spatter_batch, standard_batch
from .storage import decode, decoded_mask, encode
from .tuning import ParamSpace, default_space, random_search

SEQUENCE_NAME = "sequence.lpbf"
BATCHES = {"standard": standard_batch, "calibration": calibration_batch, "spatter": spatter_batch}


class CommandError(Exception):
    """Failure reported to the user with exit code 1."""


class UsageError(Exception):
    """Bad arguments; reported with the usage line and exit code 2."""


# -- configuration --------------------------------------------------------------------

def load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    return cfg


def option(args: argparse.Namespace, cfg: dict, name: str, default: Any = None) -> Any:
    """Command-line value, else config value, else ``default``."""
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


def gt_file(args: argparse.Namespace, cfg: dict) -> Optional[str]:
    """Sidecar path from ``--gt`` or the config's ``gt_file``; the config's ``gt`` key is the GtConfig section."""
    return getattr(args, "gt", None) or cfg.get("gt_file")


def split_algos(value) -> list[str]:
    if value is None:
        return []
    if isinstance(value, str):
        value = [value]
    out = []
    for item in value:
        # a comma inside parentheses is part of the name, not a separator
        depth, cur = 0, ""
        for ch in item:
            if ch == "," and depth == 0:
                out.append(cur)
                cur = ""
                continue
            depth += (ch == "(") - (ch == ")")
            cur += ch
        out.append(cur)
    return [a.strip() for a in out if a.strip()]


def load_param_file(path: str) -> dict[str, dict]:
    """Parameter overrides keyed by algorithm name, from a tuning result or a plain mapping."""
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"--params must be 'default', 'calibrated' or an existing file, got {path!r}")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"parameter file {path} is not valid JSON: {e}") from None
    if "best_params" in d:
        return {parse_name(d["algorithm"]).name: dict(d["best_params"])}
    table = d.get("algorithms", d)
    return {parse_name(k).name: dict(v) for k, v in table.items()}


def resolve_specs(algos: Sequence[str], params: Optional[str]) -> list[SegmenterSpec]:
    if not algos:
        raise UsageError("no algorithm given (use --algo NAME[,NAME...])")
    params = params or "default"
    overrides = {} if params in ("default", "calibrated") else load_param_file(params)
    params_set = params if params in ("default", "calibrated") else "default"
    specs = []
    for a in algos:
        try:
            spec = parse_name(a, params_set=params_set)
            if spec.name in overrides:
                spec = parse_name(a, params=overrides[spec.name], params_set=params_set)
        except UnknownAlgorithmError as e:
            raise UsageError(str(e)) from None
        except ValueError as e:
            raise UsageError(f"{a}: {e}") from None
        specs.append(spec)
    return specs


def _rect(value) -> Optional[Rect]:
    if value is None:
        return None
    if isinstance(value, str):
        value = [int(v) for v in value.split(",")]
    if len(value) != 4:
        raise UsageError("a region needs four integers x0,y0,x1,y1")
    return Rect.from_list(value)


# -- outputs --------------------------------------------------------------------------

class Outputs:
    """Tracks files written by a command so a failed run leaves nothing behind."""

    def __init__(self, out_dir: Optional[str]):
        self.dir = Path(out_dir or ".")
        self.created: list[Path] = []
        self._made_dir = False

    def path(self, name: str) -> Path:
        if not self.dir.exists():
            self.dir.mkdir(parents=True)
            self._made_dir = True
        p = self.dir / name
        self.created.append(p)
        return p

    def write_json(self, name: str, obj: Any) -> Path:
        p = self.path(name)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        return p

    def rollback(self) -> None:
        for p in self.created:
            p.unlink(missing_ok=True)
        if self._made_dir:
            try:
                self.dir.rmdir()
            except OSError:
                pass


def write_pgm(path: Path, mask: Mask) -> None:
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write((mask.bits.astype(np.uint8) * 255).tobytes())


def _safe_name(spec: SegmenterSpec) -> str:
    return spec.name.replace("+", "_")


# -- shared loading -------------------------------------------------------------------

def open_sequence(path: Optional[str]) -> FrameSequence:
    if not path:
        raise UsageError("an input sequence file is required")
    if not Path(path).is_file():
        raise UsageError(f"input file not found: {path}")
    return read_sequence(path)


def load_ground_truth(seq_path: str, seq: FrameSequence, cfg: dict, gt_path: Optional[str]) -> GtSidecar:
    """Sidecar next to the sequence, or one derived from the frames and the config's ``gt`` section."""
    p = Path(gt_path) if gt_path else sidecar_path(seq_path)
    if p.is_file():
        return GtSidecar.load(p)
    if gt_path:
        raise UsageError(f"ground-truth file not found: {gt_path}")
    gcfg = cfg.get("gt")
    if not gcfg or "cross_section" not in gcfg:
        raise CommandError(f"no ground truth: {p} is missing and the config has no gt.cross_section")
    return derive_ground_truth(seq, gcfg)


def derive_ground_truth(seq: FrameSequence, gcfg: dict) -> GtSidecar:
    """Laser centers located per frame, cutoff from the warmup frames, track width estimated."""
    cs = Rect.from_list(gcfg["cross_section"])
    if "cutoff" in gcfg:
        cutoff = float(gcfg["cutoff"])
    else:
        warm = seq.warmup()
        if not warm:
            raise CommandError("cannot derive the cutoff: the sequence has no warmup frames")
        cutoff = compute_cutoff(warm)[0]
    centers = [locate_laser(f, cutoff) for f in seq]
    direction = gcfg.get("scan_direction", "LeftToRight")
    width = gcfg.get("track_width")
    if width is None:
        hot = [seq[i] for i, c in enumerate(centers) if c is not None]
        if not hot:
            raise CommandError("no frame rises above the cutoff; cannot build ground truth")
        width = estimate_track_width(hot, cutoff, direction)
    config = GtConfig(track_width=int(width), cutoff=cutoff, cross_section=cs, scan_direction=direction,
                      inner_buffer=gcfg.get("inner_buffer"), outer_buffer=gcfg.get("outer_buffer"))
    return GtSidecar(config, centers, seq.width, seq.height, gcfg.get("calibration_frames"))


# -- verbs ----------------------------------------------------------------------------

def cmd_simulate(args, cfg: dict, out: Outputs) -> int:
    batch = option(args, cfg, "batch", "standard")
    if batch not in BATCHES:
        raise UsageError(f"unknown batch {batch!r}; choose from {', '.join(BATCHES)}")
    sim_over = dict(cfg.get("sim", {}))
    for name in ("seed", "tracks", "spatter_rate"):
        v = getattr(args, name, None)
        if v is not None:
            sim_over["track_count" if name == "tracks" else name] = v
    try:
        sim_cfg = BATCHES[batch](**sim_over)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid simulation config: {e}") from None
    sim = Simulation(sim_cfg)
    gcfg = sim.gt_config
    seq_path = out.path(SEQUENCE_NAME)
    gt_file = out.path(sidecar_path(seq_path).name)
    hdr = write_sequence(seq_path, sim.frames(), warmup_count=sim_cfg.warmup_frames)
    GtSidecar(gcfg, sim.centers, sim_cfg.width, sim_cfg.height, sim_cfg.calibration_frame_count,
              {"sim_config": sim_cfg.to_dict(), "batch": batch,
               "calibration_tracks": min(sim_cfg.calibration_tracks, sim_cfg.track_count)}).save(gt_file)
    print(f"wrote {seq_path} ({hdr.frame_count} frames, {hdr.width}x{hdr.height}, warmup {hdr.warmup_count})")
    print(f"wrote {gt_file} (track width {gcfg.track_width}, cutoff {gcfg.cutoff:.3f}, "
          f"calibration prefix {sim_cfg.calibration_frame_count} frames)")
    return 0


def cmd_segment(args, cfg: dict, out: Outputs) -> int:
    specs = resolve_specs(split_algos(option(args, cfg, "algo")), option(args, cfg, "params"))
    seq = open_sequence(option(args, cfg, "input"))
    seed = int(option(args, cfg, "seed", 0))
    writers = [SparseWriter(out.path(f"{_safe_name(s)}.sparse"), seq.width, seq.height) for s in specs]
    segs = [make_segmenter(s, seed=seed) for s in specs]
    fg_frames = [0] * len(specs)
    try:
        for frame in seq:
            for i, (seg, w) in enumerate(zip(segs, writers)):
                m = seg.step(frame)
                fg_frames[i] += m.any()
                w.write(encode(frame, m))
    finally:
        for w in writers:
            w.close()
    for s, w, n in zip(specs, writers, fg_frames):
        print(f"{s.name}: {w.count} frames, {n} with foreground")
    return 0


def _masks_from_sparse(path: str, n_frames: int, width: int, height: int):
    hdr = read_sparse_header(path)
    if (hdr.width, hdr.height) != (width, height):
        raise CommandError(f"{path}: {hdr.width}x{hdr.height} does not match the {width}x{height} sequence")
    by_index = {}
    for sf in iter_sparse(path):
        by_index[sf.frame_index] = sf
    for i in range(n_frames):
        sf = by_index.get(i)
        yield Mask.zeros(height, width) if sf is None else decoded_mask(sf, width, height)


def cmd_evaluate(args, cfg: dict, out: Outputs) -> int:
    input_path = option(args, cfg, "input")
    seq = open_sequence(input_path)
    side = load_ground_truth(input_path, seq, cfg, gt_file(args, cfg))
    if len(side.centers) != len(seq):
        raise CommandError(f"ground truth has {len(side.centers)} frames, sequence has {len(seq)}")
    gts = side.ground_truth()
    preds = option(args, cfg, "predictions") or []
    specs = [] if preds and not option(args, cfg, "algo") else \
        resolve_specs(split_algos(option(args, cfg, "algo")), option(args, cfg, "params"))
    seed = int(option(args, cfg, "seed", 0))
    segs = [make_segmenter(s, seed=seed) for s in specs]
    names = [s.name for s in specs] + [str(p) for p in preds]
    accs = [ScoreAccumulator() for _ in names]
    streams = [_masks_from_sparse(p, len(seq), seq.width, seq.height) for p in preds]
    for frame, g in zip(seq, gts):
        view = GtView(g)
        for seg, acc in zip(segs, accs):
            acc.add(seg.step(frame), view)
        for stream, acc in zip(streams, accs[len(segs):]):
            acc.add(next(stream), view)
    rows = []
    print(f"{'algorithm':<24} {'precision':>9} {'recall':>9} {'F1':>7}")
    for name, acc in zip(names, accs):
        sc = acc.score()
        rows.append({"algorithm": name, **sc.to_dict(), "macro_f1": acc.macro_f1(), "counts": acc.total.to_dict()})
        print(f"{name:<24} {sc.precision:>9.4f} {sc.recall:>9.4f} {sc.f1:>7.4f}")
    out.write_json("scores.json", {"input": str(input_path), "params": option(args, cfg, "params", "default"),
                                   "results": rows})
    with open(out.path("scores.jsonl"), "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return 0


def cmd_tune(args, cfg: dict, out: Outputs) -> int:
    input_path = option(args, cfg, "input")
    specs = resolve_specs(split_algos(option(args, cfg, "algo")), option(args, cfg, "params"))
    seq = open_sequence(input_path)
    side = load_ground_truth(input_path, seq, cfg, gt_file(args, cfg))
    n = option(args, cfg, "calibration_frames") or side.calibration_frames or len(seq)
    n = min(int(n), len(seq))
    frames = FrameSequence(seq.data[:n], seq.frame_rate, seq.warmup_count)
    gts = side.ground_truth()[:n]
    trials = int(option(args, cfg, "trials", 300))
    seed = int(option(args, cfg, "seed", 0))
    spaces = cfg.get("space", {})
    for spec in specs:
        try:
            space = ParamSpace.from_dict(spaces[spec.name]) if spec.name in spaces else default_space(spec)
        except KeyError:
            raise UsageError(f"{spec.name} has no tunable parameters") from None
        except ValueError as e:
            raise UsageError(f"invalid search space for {spec.name}: {e}") from None
        res = random_search(spec, space, frames, gts, trials=trials, seed=seed)
        path = out.path(f"{_safe_name(spec)}.tune.json")
        res.save(path)
        print(f"{spec.name}: best F1 {res.best_f1:.4f} with {json.dumps(res.best_params, sort_keys=True)} "
              f"({trials} trials on {n} frames) -> {path}")
    return 0


def cmd_bench(args, cfg: dict, out: Outputs) -> int:
    specs = resolve_specs(split_algos(option(args, cfg, "algo")), option(args, cfg, "params"))
    limit = int(option(args, cfg, "frames", 2000))
    input_path = option(args, cfg, "input")
    if input_path:
        frames = itertools.islice(iter(open_sequence(input_path)), limit)
        source = str(input_path)
    else:
        seed = int(option(args, cfg, "seed", 42))
        sim_cfg = standard_batch(seed=seed, **{"track_count": 66, **cfg.get("sim", {})})
        frames = itertools.islice(Simulation(sim_cfg).frames(), limit)
        source = f"synthetic standard batch, seed {seed}"
    try:
        reports = bench_many(specs, frames, warmup=int(option(args, cfg, "warmup", 50)))
    except ValueError as e:
        raise CommandError(str(e)) from None
    info = machine_info()
    print(format_table(reports, info))
    out.write_json("bench.json", {"source": source, "machine": info, "reports": [r.to_dict() for r in reports]})
    return 0


def cmd_compress(args, cfg: dict, out: Outputs) -> int:
    check = option(args, cfg, "check")
    if check:
        hdr = read_sparse_header(check)
        n = sum(1 for _ in iter_sparse(check))
        print(f"{check}: ok, {n} frames, {hdr.width}x{hdr.height}")
        return 0
    specs = resolve_specs(split_algos(option(args, cfg, "algo")), option(args, cfg, "params"))
    input_path = option(args, cfg, "input")
    seq = open_sequence(input_path)
    hdr = read_sequence_header(input_path)
    dense = dense_nbytes(seq.width, seq.height, len(seq), hdr.tag)
    rows = []
    for spec in specs:
        path = out.path(f"{_safe_name(spec)}.sparse")
        seg = make_segmenter(spec, seed=int(option(args, cfg, "seed", 0)))
        with SparseWriter(path, seq.width, seq.height, hdr.tag) as w:
            for frame in seq:
                w.write(encode(frame, seg.step(frame)))
        # verify against an independent replay of the segmentation
        seg = make_segmenter(spec, seed=int(option(args, cfg, "seed", 0)))
        pixels = 0
        for frame, sf in itertools.zip_longest(seq, iter_sparse(path)):
            if frame is None or sf is None:
                raise CommandError(f"{path}: frame count mismatch after writing")
            m = seg.step(frame)
            if not np.array_equal(decode(sf, seq.width, seq.height).pixels, np.where(m.bits, frame.pixels, 0)):
                raise CommandError(f"{path}: round trip differs at frame {frame.index}")
            pixels += m.count()
        size = path.stat().st_size
        rows.append({"algorithm": spec.name, "file": path.name, "sparse_bytes": size, "dense_bytes": dense,
                     "ratio": size / dense, "foreground_pixels": pixels})
        print(f"{spec.name}: {size} bytes vs {dense} dense ({100 * size / dense:.3f}%), round trip exact")
    out.write_json("compress.json", {"input": str(input_path), "results": rows})
    return 0


def cmd_spatter(args, cfg: dict, out: Outputs) -> int:
    input_path = option(args, cfg, "input")
    specs = resolve_specs(split_algos(option(args, cfg, "algo")), option(args, cfg, "params"))
    seq = open_sequence(input_path)
    region = _rect(option(args, cfg, "region"))
    overflow = option(args, cfg, "overflow")
    if region is None or overflow is None:
        side = load_ground_truth(input_path, seq, cfg, gt_file(args, cfg))
        region = region or side.gt_config.cross_section
        overflow = side.gt_config.track_width if overflow is None else overflow
    seed = int(option(args, cfg, "seed", 0))
    segs = [make_segmenter(s, seed=seed) for s in specs]
    comps = [CompositeAccumulator((seq.height, seq.width)) for _ in specs]
    for frame in seq:
        for seg, comp in zip(segs, comps):
            m = seg.step(frame)
            # the composite covers the build only; warmup frames prime the models
            if frame.index >= seq.warmup_count:
                comp.add(m)
    rows = []
    for spec, comp in zip(specs, comps):
        mask = comp.mask()
        frac = spatter_outside_fraction(mask, region, int(overflow))
        pgm = out.path(f"{_safe_name(spec)}_composite.pgm")
        write_pgm(pgm, mask)
        rows.append({"algorithm": spec.name, "outside_fraction": frac, "composite_pixels": mask.count(),
                     "image": pgm.name})
        print(f"{spec.name:<18} outside fraction {frac:.4f} ({mask.count()} composite pixels)")
    out.write_json("spatter.json", {"input": str(input_path), "region": region.to_list(),
                                    "overflow": int(overflow), "results": rows})
    return 0


COMMANDS = {"simulate": cmd_simulate, "segment": cmd_segment, "evaluate": cmd_evaluate, "tune": cmd_tune,
            "bench": cmd_bench, "compress": cmd_compress, "spatter": cmd_spatter}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default values for any option")
    common.add_argument("--seed", type=int)
    common.add_argument("--algo", action="append", help="algorithm name(s), comma separated, e.g. FD+Thresh,Otsu")
    common.add_argument("--params", help="'default', 'calibrated' or a JSON parameter file")
    common.add_argument("--out", help="output directory (default: current directory)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lpbfseg", description="Foreground segmentation of thermal LPBF frame sequences.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a synthetic sequence and its ground truth")
    s.add_argument("--batch", choices=sorted(BATCHES))
    s.add_argument("--tracks", type=int)
    s.add_argument("--spatter-rate", dest="spatter_rate", type=float)

    for name, text in (("segment", "write per-algorithm sparse foreground files"),
                       ("evaluate", "score algorithms against ground truth"),
                       ("tune", "random-search calibration of parameters"),
                       ("bench", "per-frame timing"),
                       ("compress", "sparse foreground storage with size report"),
                       ("spatter", "composite masks and the share of foreground outside the scanned region")):
        c = sub.add_parser(name, parents=[common], help=text)
        c.add_argument("input", nargs="?", help="sequence file")
        if name in ("evaluate", "tune", "spatter"):
            c.add_argument("--gt", help="ground-truth sidecar (default: INPUT.gt.json)")
        if name == "evaluate":
            c.add_argument("--predictions", action="append", help="sparse file to score instead of running an algorithm")
        if name == "tune":
            c.add_argument("--trials", type=int)
            c.add_argument("--calibration-frames", dest="calibration_frames", type=int)
        if name == "bench":
            c.add_argument("--frames", type=int, help="frames to time (default 2000)")
            c.add_argument("--warmup", type=int, help="leading frames excluded from timing (default 50)")
        if name == "compress":
            c.add_argument("--check", help="validate an existing sparse file instead")
        if name == "spatter":
            c.add_argument("--region", help="x0,y0,x1,y1 (default: the ground-truth cross-section)")
            c.add_argument("--overflow", type=int, help="pixels the region may be exceeded by (default: track width)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    out = None
    try:
        cfg = load_config(args.config)
        out = Outputs(option(args, cfg, "out"))
        return COMMANDS[args.command](args, cfg, out)
    except UsageError as e:
        if out:
            out.rollback()
        parser.print_usage(sys.stderr)
        print(f"lpbfseg {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (CommandError, CorruptRecordError, OSError, ValueError) as e:
        if out:
            out.rollback()
        print(f"lpbfseg {args.command}: error: {e}", file=sys.stderr)
        return 1
    except BaseException:
        if out:
            out.rollback()
        raise


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
