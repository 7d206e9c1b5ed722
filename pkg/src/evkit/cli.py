"""Command-line front end.

Subcommands: emulate, annotate, render, mix, split, eval, gap, inspect.
Output files are byte-identical across repeated runs with the same inputs
and seed; diagnostics go to stderr. Exit codes: 0 success, 2 usage,
3 format, 4 capacity, 5 internal. ``EVKIT_THREADS`` caps worker threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import codec, evaluation, mixer, render, sync
from .core import Frame, SensorGeometry
from .emulator import EmulatorParams, emulate
from .errors import EvkitError, FormatError, UsageError

FRAME_LIST_NAME = "frames.csv"
FRAME_LIST_HEADER = "index,t_us,path"
GAP_CSV_HEADER = "fraction_real,map"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("EVKIT_THREADS", "1")))
    except ValueError:
        return 1


def _load_frames(frames_arg: str) -> list[Frame]:
    from PIL import Image

    path = Path(frames_arg)
    list_path = path / FRAME_LIST_NAME if path.is_dir() else path
    base = list_path.parent
    if not list_path.exists():
        raise FormatError(f"frame list not found: {list_path}")
    rows = list_path.read_text(encoding="utf-8").splitlines()
    if not rows or rows[0].strip() != FRAME_LIST_HEADER:
        raise FormatError(f"expected header {FRAME_LIST_HEADER!r} in {list_path}")
    frames = []
    geometry = None
    for lineno, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        fields = row.split(",")
        if len(fields) != 3:
            raise FormatError(f"{list_path} row {lineno}: expected 3 fields")
        try:
            t_us = int(fields[1])
        except ValueError:
            raise FormatError(f"{list_path} row {lineno}: bad timestamp {fields[1]!r}") from None
        img_path = base / fields[2]
        try:
            img = np.asarray(Image.open(img_path).convert("RGB"))
        except FileNotFoundError:
            raise FormatError(f"frame image not found: {img_path}") from None
        if geometry is None:
            geometry = SensorGeometry(width=img.shape[1], height=img.shape[0])
        frames.append(Frame(t=t_us, geometry=geometry, intensity=img))
    if not frames:
        raise FormatError(f"no frames listed in {list_path}")
    return frames


def _write_events(stream, out_path: str) -> None:
    fmt = "csv" if out_path.endswith(".csv") else "evb"
    with open(out_path, "wb") as fp:
        if fmt == "csv":
            codec.write_events_csv(stream, fp)
        else:
            codec.write_events_evb(stream, fp)


def _read_events(path: str, strict: bool = True):
    fmt = codec.sniff_format(path)
    with open(path, "rb") as fp:
        if fmt == "evb":
            result = codec.read_events_evb(fp, strict=strict)
        else:
            result = codec.read_events_csv(fp, strict=strict)
    if result.warnings:
        print(f"warning: codec: {result.warnings} issue(s) repaired in {path}",
              file=sys.stderr)
    return result.stream


def _emit_json(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# subcommand handlers

def _cmd_emulate(args) -> int:
    params = EmulatorParams(
        c_pos=args.c_pos, c_neg=args.c_neg,
        sigma_pos=args.sigma_pos, sigma_neg=args.sigma_neg,
        refractory=args.refractory_us, use_log=args.use_log,
        log_eps=args.log_eps, seed=args.seed)
    frames = _load_frames(args.frames)
    threads = _threads()
    stream = emulate(frames, params, tiles=max(threads, 1), threads=threads)
    _write_events(stream, args.output)
    print(f"{len(stream)} events -> {args.output}", file=sys.stderr)
    return 0


def _cmd_annotate(args) -> int:
    records = sync.decode_tick_log(Path(args.ticks).read_bytes())
    kept = sync.filter_tick_records(records, min_speed=args.min_speed, radius=args.radius)
    rows = sync.resample_annotations(kept, rate_hz=args.rate_hz)
    Path(args.output).write_bytes(codec.encode_annotations(rows))
    print(f"{len(rows)} annotations -> {args.output}", file=sys.stderr)
    return 0


def _cmd_render(args) -> int:
    stream = _read_events(args.events)
    background = render.GRAY if args.palette == "gray" else render.BLACK
    palette = render.Palette(background=background, mixing=args.mixing)
    if len(stream) == 0:
        raise FormatError("cannot render an empty event stream")
    t0 = int(stream.t[0]) if args.t0 is None else args.t0
    t_end = int(stream.t[-1]) + 1
    stride = args.stride_us or args.window_us
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    i = 0
    t = t0
    while t < t_end:
        frame = render.render_window(stream, t, t + args.window_us, palette)
        if args.format == "png":
            from PIL import Image

            Image.fromarray(frame.intensity).save(out_dir / f"frame_{i:06d}.png")
        else:
            with open(out_dir / f"frame_{i:06d}.ppm", "wb") as fp:
                render.write_ppm(frame, fp)
        i += 1
        t += stride
    print(f"{i} frames -> {out_dir}", file=sys.stderr)
    return 0


def _cmd_mix(args) -> int:
    entries = mixer.load_manifest(args.manifest)
    real = mixer.pool_groups(entries, mixer.REAL)
    synthetic = mixer.pool_groups(entries, mixer.SYNTHETIC)
    plan = mixer.compose_mix(real, synthetic, args.k)
    _emit_json(plan.to_json_dict(), args.output)
    return 0


def _cmd_split(args) -> int:
    entries = mixer.load_manifest(args.manifest)
    real = [e for e in entries if e.domain == mixer.REAL]
    synthetic = [e for e in entries if e.domain == mixer.SYNTHETIC]
    validation, test = mixer.fixed_eval_split(real, synthetic)
    doc = {"validation": validation.to_json_dict(), "test": test.to_json_dict()}
    _emit_json(doc, args.output)
    return 0


def _cmd_eval(args) -> int:
    gts = codec.decode_annotations(Path(args.ground_truth).read_bytes())
    dets = codec.decode_detections(Path(args.detections).read_bytes())
    if args.coco:
        thresholds = evaluation.COCO_THRESHOLDS
    else:
        try:
            thresholds = tuple(float(v) for v in args.iou.split(","))
        except ValueError:
            raise UsageError(f"bad --iou list {args.iou!r}") from None
    report = evaluation.evaluate(gts, dets, thresholds=thresholds)
    _emit_json(report.to_json_dict(), args.output)
    return 0


def _cmd_gap(args) -> int:
    text = Path(args.results).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != GAP_CSV_HEADER:
        raise FormatError(f"expected header {GAP_CSV_HEADER!r} in {args.results}")
    points = []
    for lineno, row in enumerate(lines[1:], start=2):
        fields = row.split(",")
        if len(fields) != 2:
            raise FormatError(f"{args.results} row {lineno}: expected 2 fields")
        try:
            points.append((float(fields[0]), float(fields[1])))
        except ValueError:
            raise FormatError(f"{args.results} row {lineno}: unparsable number") from None
    fit = evaluation.fit_gap_line(points)
    _emit_json(fit.to_json_dict(), args.output)
    if args.points_csv:
        body = GAP_CSV_HEADER + "\n" + "".join(f"{x},{y}\n" for x, y in fit.points)
        Path(args.points_csv).write_text(body, encoding="utf-8")
    return 0


def _cmd_inspect(args) -> int:
    stream = _read_events(args.events, strict=not args.lenient)
    doc = {
        "path": args.events,
        "format": codec.sniff_format(args.events),
        "events": len(stream),
        "geometry": {"width": stream.geometry.width, "height": stream.geometry.height},
    }
    if len(stream):
        t0, t1 = int(stream.t[0]), int(stream.t[-1])
        duration = t1 - t0
        doc.update({
            "t_first_us": t0,
            "t_last_us": t1,
            "duration_us": duration,
            "positive": int(np.sum(stream.p > 0)),
            "negative": int(np.sum(stream.p < 0)),
            "rate_hz": len(stream) / (duration / 1e6) if duration else None,
        })
    _emit_json(doc, args.output)
    return 0


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evkit",
        description="DVS emulation, event/annotation codecs, dataset mixing, "
                    "and detection evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("emulate", help="convert a frame sequence into events")
    p.add_argument("frames", help="frame directory (with frames.csv) or frame-list file")
    p.add_argument("-o", "--output", required=True, help="output .evb or .csv path")
    p.add_argument("--c-pos", type=float, default=0.3)
    p.add_argument("--c-neg", type=float, default=0.3)
    p.add_argument("--sigma-pos", type=float, default=0.0)
    p.add_argument("--sigma-neg", type=float, default=0.0)
    p.add_argument("--refractory-us", type=int, default=0)
    p.add_argument("--use-log", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--log-eps", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_emulate)

    p = sub.add_parser("annotate", help="tick log -> seven-field annotation CSV")
    p.add_argument("ticks", help="tick-log CSV path")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--rate-hz", type=float, default=sync.DEFAULT_RATE_HZ)
    p.add_argument("--min-speed", type=float, default=sync.DEFAULT_MIN_SPEED)
    p.add_argument("--radius", type=float, required=True,
                   help="keep actors within this many meters of the sensor")
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("render", help="accumulate events into polarity images")
    p.add_argument("events", help="event file (.evb or .csv)")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--window-us", type=int, required=True)
    p.add_argument("--stride-us", type=int, default=None)
    p.add_argument("--t0", type=int, default=None)
    p.add_argument("--palette", choices=["black", "gray"], default="black")
    p.add_argument("--mixing", choices=[render.MAJORITY, render.LAST_EVENT_WINS],
                   default=render.MAJORITY)
    p.add_argument("--format", choices=["ppm", "png"], default="ppm")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("mix", help="compose a k/7 real-synthetic training plan")
    p.add_argument("manifest", help="sequence manifest (.csv or .toml)")
    p.add_argument("--k", type=int, required=True, help="number of sevenths real")
    p.add_argument("-o", "--output", default=None, help="plan JSON (default stdout)")
    p.set_defaults(func=_cmd_mix)

    p = sub.add_parser("split", help="fixed validation/test plans")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("ground_truth", help="annotation CSV")
    p.add_argument("detections", help="detection CSV")
    p.add_argument("--iou", default="0.5,0.75", help="comma-separated IoU thresholds")
    p.add_argument("--coco", action="store_true",
                   help="use the ten 0.50:0.05:0.95 thresholds")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gap", help="fit mAP versus real-data fraction")
    p.add_argument("results", help=f"CSV with header {GAP_CSV_HEADER!r}")
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--points-csv", default=None,
                   help="also write the (fraction, mAP) points as CSV")
    p.set_defaults(func=_cmd_gap)

    p = sub.add_parser("inspect", help="summarize an event file")
    p.add_argument("events")
    p.add_argument("--lenient", action="store_true",
                   help="repair ordering/bounds problems instead of failing")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_inspect)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except EvkitError as exc:
        print(f"error: {exc.component}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: internal: {exc!r}", file=sys.stderr)
        return 5


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
