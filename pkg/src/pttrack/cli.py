"""Command-line surface: gen, train, track, ablate, bench.

All randomness flows from one root seed through named substreams, so runs
are reproducible bit-exactly from their manifest on a single thread. Exit
codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from .config import TrackerConfig, config_to_dict, load_config
from .errors import DataError, NumericalError, UsageError
from .manifest import RunManifest, write_manifest
from .metrics import density_report, precision_auc, render_report, render_report_kv, success_auc
from .rng import substream_seed
from .synth import CATEGORIES, CLUTTER_LEVELS, generate_corpus, load_corpus, load_split
from .tracker import (
    build_training_samples,
    load_checkpoint,
    save_checkpoint,
    track_tracklet,
    train_model,
)

TEMPLATE_MODES = ("first", "previous", "first+previous", "all-previous")
WIRINGS = (
    ("baseline", False, False),
    ("ptt-vote", True, False),
    ("ptt-prop", False, True),
    ("ptt-both", True, True),
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _thread_cap() -> int:
    """PTT_THREADS caps worker parallelism; the reference implementation is
    sequential, so any cap reproduces the single-thread outputs bit-exactly."""
    raw = os.environ.get("PTT_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"PTT_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise UsageError("PTT_THREADS must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="pttrack", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[], help="generate a synthetic corpus")
    gen.add_argument("--out", required=True, help="output corpus directory")
    gen.add_argument("--count", type=int, default=40)
    gen.add_argument("--frames", type=int, default=20)
    gen.add_argument("--categories", default="rigid,nonrigid", help="comma separated")
    gen.add_argument("--density-mix", choices=("balanced", "sparse-heavy"), default="balanced")
    gen.add_argument("--clutter", choices=CLUTTER_LEVELS, default="heavy")
    gen.add_argument("--seed", type=int, default=0)

    def add_config_flags(p):
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--template-mode", choices=TEMPLATE_MODES, default=None)
        p.add_argument("--ptt-vote", choices=("on", "off"), default=None)
        p.add_argument("--ptt-prop", choices=("on", "off"), default=None)
        p.add_argument("--sampler", choices=("fps", "rs"), default=None)

    train = sub.add_parser("train", help="train a tracker checkpoint")
    add_config_flags(train)
    train.add_argument("--data", required=True, help="corpus directory")
    train.add_argument("--out", required=True, help="checkpoint path")

    track = sub.add_parser("track", help="evaluate a checkpoint on a split")
    add_config_flags(track)
    track.add_argument("--checkpoint", default=None)
    track.add_argument("--data", required=True)
    track.add_argument("--report", required=True, help="report output path")
    track.add_argument("--split", default="test")
    track.add_argument(
        "--oracle-stub",
        action="store_true",
        help="emit ground-truth boxes instead of model predictions",
    )

    ablate = sub.add_parser("ablate", help="train and evaluate the four wirings")
    add_config_flags(ablate)
    ablate.add_argument("--data", required=True)
    ablate.add_argument("--out", required=True, help="output directory")

    bench = sub.add_parser("bench", help="per-frame timing breakdown")
    add_config_flags(bench)
    bench.add_argument("--checkpoint", required=True)
    bench.add_argument("--data", required=True)
    bench.add_argument("--out", required=True, help="timing report path")
    bench.add_argument("--split", default="test")
    return top


def _resolve_config(args) -> TrackerConfig:
    config = TrackerConfig()
    if getattr(args, "config", None):
        config = load_config(args.config, base=config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if getattr(args, "template_mode", None) is not None:
        updates["template_mode"] = args.template_mode
    if getattr(args, "ptt_vote", None) is not None:
        updates["ptt_vote"] = args.ptt_vote == "on"
    if getattr(args, "ptt_prop", None) is not None:
        updates["ptt_prop"] = args.ptt_prop == "on"
    if getattr(args, "sampler", None) is not None:
        updates["sampler"] = args.sampler
    if updates:
        config = dataclasses.replace(config, **updates)
    return config


def _write_text(path, text: str) -> None:
    try:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fp:
            fp.write(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}")


def evaluate_split(model, tracklets, seed: int, template_mode=None, oracle: bool = False):
    """Per-tracklet (name, success, precision, carried) rows plus raw results."""
    rows, successes, results = [], [], []
    for trk in tracklets:
        gt = [box for _, box in trk.frames]
        if oracle:
            boxes, carried, result = gt, 0, None
        else:
            result = track_tracklet(
                model, trk, substream_seed(seed, f"track/{trk.name}"), template_mode
            )
            boxes, carried = result.boxes, result.carried_frames
        success = success_auc(boxes, gt)
        rows.append((trk.name, success, precision_auc(boxes, gt), carried))
        successes.append(success)
        results.append(result)
    return rows, successes, results


# ---------------------------------------------------------------- commands


def cmd_gen(args, argv, threads) -> int:
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    if args.frames < 1:
        raise UsageError("--frames must be >= 1")
    categories = [c.strip() for c in args.categories.split(",") if c.strip()]
    for cat in categories:
        if cat not in CATEGORIES:
            raise UsageError(f"unknown category {cat!r}; choose from {CATEGORIES}")
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {args.out}: {exc}")
    manifest = RunManifest(
        command="gen",
        argv=list(argv),
        seed=args.seed,
        config={
            "count": args.count,
            "frames": args.frames,
            "categories": categories,
            "density_mix": args.density_mix,
            "clutter": args.clutter,
            "threads": threads,
        },
    )
    write_manifest(os.path.join(args.out, "manifest.json"), manifest)
    corpus = generate_corpus(
        args.out, args.count, args.frames, categories, args.density_mix, args.clutter, args.seed
    )
    print(f"wrote {len(corpus.entries)} tracklets to {args.out}")
    return 0


def cmd_train(args, argv, threads) -> int:
    config = _resolve_config(args)
    corpus = load_corpus(args.data)
    tracklets = load_split(corpus, "train")
    samples = build_training_samples(tracklets, config, substream_seed(config.seed, "data"))
    parent = os.path.dirname(os.path.abspath(args.out))
    try:
        os.makedirs(parent, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {parent}: {exc}")
    snapshot = config_to_dict(config)
    snapshot["threads"] = threads
    manifest = RunManifest(command="train", argv=list(argv), seed=config.seed, config=snapshot)
    write_manifest(args.out + ".manifest.json", manifest)
    model, logs = train_model(samples, config, config.seed)
    save_checkpoint(args.out, model)
    log_text = "".join(log.line() + "\n" for log in logs)
    _write_text(args.out + ".log", log_text)
    print(log_text, end="")
    print(f"saved checkpoint to {args.out} ({len(samples)} samples)")
    return 0


def cmd_track(args, argv, threads) -> int:
    if not args.oracle_stub and not args.checkpoint:
        raise UsageError("--checkpoint is required unless --oracle-stub is set")
    corpus = load_corpus(args.data)
    tracklets = load_split(corpus, args.split)
    model = None
    if args.oracle_stub:
        snapshot = {"oracle_stub": True}
        seed = args.seed if args.seed is not None else 0
    else:
        model = load_checkpoint(args.checkpoint)
        snapshot = config_to_dict(model.config)
        seed = args.seed if args.seed is not None else model.config.seed
    snapshot["threads"] = threads
    snapshot["split"] = args.split
    if args.template_mode is not None:
        snapshot["template_mode"] = args.template_mode
    manifest = RunManifest(command="track", argv=list(argv), seed=seed, config=snapshot)
    write_manifest(args.report + ".manifest.json", manifest)
    if not tracklets:
        report = render_report([])
        _write_text(args.report, report)
        _write_text(args.report + ".kv", render_report_kv([]))
        print(f"warning: split {args.split!r} is empty", file=sys.stderr)
        print(report, end="")
        return 0
    rows, successes, _ = evaluate_split(
        model, tracklets, seed, template_mode=args.template_mode, oracle=args.oracle_stub
    )
    density = density_report(tracklets, successes)
    report = render_report(rows, density)
    _write_text(args.report, report)
    _write_text(args.report + ".kv", render_report_kv(rows, density))
    print(report, end="")
    return 0


def _ablation_text(rows) -> str:
    lines = ["wiring      success  precision"]
    for name, success, precision in rows:
        lines.append(f"{name:<10s} {success:8.4f} {precision:10.4f}")
    return "\n".join(lines) + "\n"


def _ablation_kv(rows) -> str:
    lines = []
    for name, success, precision in rows:
        lines.append(f"{name}.success = {success!r}")
        lines.append(f"{name}.precision = {precision!r}")
    return "\n".join(lines) + "\n"


def cmd_ablate(args, argv, threads) -> int:
    config = _resolve_config(args)
    corpus = load_corpus(args.data)
    train_trks = load_split(corpus, "train")
    test_trks = load_split(corpus, "test")
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {args.out}: {exc}")
    snapshot = config_to_dict(config)
    snapshot["threads"] = threads
    manifest = RunManifest(command="ablate", argv=list(argv), seed=config.seed, config=snapshot)
    write_manifest(os.path.join(args.out, "manifest.json"), manifest)
    samples = build_training_samples(train_trks, config, substream_seed(config.seed, "data"))
    rows = []
    for name, vote_on, prop_on in WIRINGS:
        row_config = dataclasses.replace(config, ptt_vote=vote_on, ptt_prop=prop_on)
        model, _ = train_model(samples, row_config, config.seed)
        test_rows, _, _ = evaluate_split(model, test_trks, config.seed)
        success = float(np.mean([r[1] for r in test_rows])) if test_rows else 0.0
        precision = float(np.mean([r[2] for r in test_rows])) if test_rows else 0.0
        rows.append((name, success, precision))
        print(f"{name:<10s} success={success:.4f} precision={precision:.4f}")
    _write_text(os.path.join(args.out, "ablation.txt"), _ablation_text(rows))
    _write_text(os.path.join(args.out, "ablation.kv"), _ablation_kv(rows))
    return 0


def cmd_bench(args, argv, threads) -> int:
    model = load_checkpoint(args.checkpoint)
    corpus = load_corpus(args.data)
    tracklets = load_split(corpus, args.split)
    seed = args.seed if args.seed is not None else model.config.seed
    snapshot = config_to_dict(model.config)
    snapshot["threads"] = threads
    manifest = RunManifest(command="bench", argv=list(argv), seed=seed, config=snapshot)
    write_manifest(args.out + ".manifest.json", manifest)
    if not tracklets:
        table = "no frames benchmarked\n"
        _write_text(args.out, table)
        print(table, end="")
        return 0
    stages = {"prepare": [], "forward": [], "post": []}
    wall = 0.0
    frames = 0
    for trk in tracklets:
        tic = time.perf_counter()
        result = track_tracklet(
            model,
            trk,
            substream_seed(seed, f"track/{trk.name}"),
            args.template_mode,
            collect_timing=True,
        )
        wall += time.perf_counter() - tic
        for key in stages:
            stages[key].extend(result.timings[key])
        frames += len(trk.frames) - 1
    means = {key: 1000.0 * float(np.mean(v)) for key, v in stages.items()}
    part_sum = sum(float(np.sum(v)) for v in stages.values())
    fps = frames / part_sum if part_sum > 0 else float("inf")
    lines = ["stage      mean_ms"]
    for key in ("prepare", "forward", "post"):
        lines.append(f"{key:<10s} {means[key]:8.3f}")
    lines.append(f"{'total':<10s} {1000.0 * part_sum / frames:8.3f}")
    lines.append(f"frames     {frames}")
    lines.append(f"wall_s     {wall:.3f}")
    lines.append(f"fps        {fps:.2f}")
    table = "\n".join(lines) + "\n"
    _write_text(args.out, table)
    print(table, end="")
    return 0


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    handlers = {
        "gen": cmd_gen,
        "train": cmd_train,
        "track": cmd_track,
        "ablate": cmd_ablate,
        "bench": cmd_bench,
    }
    try:
        threads = _thread_cap()
        args = build_parser().parse_args(argv)
        return handlers[args.command](args, list(argv), threads)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
