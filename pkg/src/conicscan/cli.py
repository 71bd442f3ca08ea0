"""``conicscan`` command line: detect, experiment, bench and gen.

Exit codes: 0 success, 1 usage error, 2 input/output error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import yaml

from . import experiments as ex
from .chains import ChainConfig
from .classifier import ClassifierConfig, detect_frame
from .geometry import EmptyFrameError, FrameError, default_intrinsics, load_frame, read_intrinsics, save_frame
from .segmenter import SegmenterConfig
from .synth import (
    SceneSpec,
    back_wall,
    dump_scene,
    exercise_ball,
    floor_plane,
    load_scene,
    paper_scene,
    parking_cone,
    render,
    sphere_on_cylinder_scene,
    trash_can,
)

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2

# every default the acceptance suite relies on, pinned in one place
PROFILES = {
    "paper": {
        "segmenter": SegmenterConfig(),
        "chain": ChainConfig(),
        "classifier": ClassifierConfig(),
    },
}

PRESETS = {
    "paper": lambda noise, seed: paper_scene(noise, seed),
    "sphere-on-cylinder": lambda noise, seed: sphere_on_cylinder_scene(noise, seed),
    "cylinder": lambda noise, seed: SceneSpec([trash_can(0.0, 2.0)], [floor_plane(), back_wall()], noise, seed=seed),
    "cone": lambda noise, seed: SceneSpec([parking_cone(0.0, 2.0)], [floor_plane(), back_wall()], noise, seed=seed),
    "sphere": lambda noise, seed: SceneSpec([exercise_ball(0.0, 2.4)], [floor_plane(), back_wall()], noise, seed=seed),
    "tilted-cylinder": lambda noise, seed: SceneSpec(
        [trash_can(0.0, 2.0, tilt_in_image=60.0)], [floor_plane(), back_wall()], noise, seed=seed),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def thread_count() -> int:
    """Worker threads: the CPU count, capped by ``CONIC_SCAN_THREADS``."""
    n = os.cpu_count() or 1
    cap = os.environ.get("CONIC_SCAN_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise UsageError(f"CONIC_SCAN_THREADS must be an integer, got {cap!r}")
    return n


def _add_config_flags(p):
    p.add_argument("--profile", choices=sorted(PROFILES), default="paper",
                   help="preset of all thresholds (default: paper)")
    p.add_argument("--threshold", type=float, help="row fit error threshold, m")
    p.add_argument("--phi", type=float, help="chain linking distance, m")
    p.add_argument("--k-neighbors", type=int, help="rows of look-ahead when chaining")
    p.add_argument("--elongation-min", type=float, help="smallest minor/major axis ratio")
    p.add_argument("--radius-min", type=float, help="smallest row radius, m")
    p.add_argument("--radius-max", type=float, help="largest row radius, m")
    p.add_argument("--transpose", action="store_true", help="also scan columns (steeply tilted objects)")
    p.add_argument("--seed", type=int, default=0)


def configs(args):
    prof = PROFILES[args.profile]
    seg = prof["segmenter"]
    chain = prof["chain"]
    upd = {k: v for k, v in (
        ("error_threshold", args.threshold), ("elongation_min", args.elongation_min),
        ("radius_min", args.radius_min), ("radius_max", args.radius_max)) if v is not None}
    try:
        seg = replace(seg, **upd)
        chain = replace(chain, **{k: v for k, v in (("phi", args.phi), ("k_neighbors", args.k_neighbors))
                                  if v is not None})
    except ValueError as exc:
        raise UsageError(str(exc))
    return seg, chain, prof["classifier"]


def _round(v):
    if isinstance(v, float):
        return v if not math.isfinite(v) else float(f"{v:.9g}")
    if isinstance(v, (list, tuple)):
        return [_round(x) for x in v]
    if isinstance(v, dict):
        return {k: _round(x) for k, x in v.items()}
    return v


def _json_safe(v):
    # NaN is not JSON; report missing values as null
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    return v


def detection_record(frame_id: int, source: str, timestamp: float, prims, timings) -> dict:
    return {
        "frame": frame_id,
        "source": source,
        "timestamp": timestamp,
        "primitives": [_json_safe(_round(p.as_dict())) for p in prims],
        "timing_us": {k: round(float(v), 1) for k, v in timings.items() if k != "ellipses"},
        "ellipses": int(timings.get("ellipses", 0)),
    }


CSV_FIELDS = ["frame", "source", "timestamp", "kind", "radius", "distance", "center_x", "center_y",
              "center_z", "support", "residual", "half_angle", "zr_radius"]


def _csv_rows(rec):
    for p in rec["primitives"]:
        c = p["center"]
        yield {"frame": rec["frame"], "source": rec["source"], "timestamp": rec["timestamp"],
               "kind": p["kind"], "radius": p["radius"], "distance": p["distance"],
               "center_x": c[0], "center_y": c[1], "center_z": c[2], "support": p["support"],
               "residual": p["residual"], "half_angle": p["half_angle"], "zr_radius": p["zr_radius"]}


def _inputs(paths):
    out = []
    for raw in paths:
        if raw == "-":
            out.extend(line.strip() for line in sys.stdin if line.strip())
            continue
        path = Path(raw)
        if path.is_dir():
            out.extend(str(p) for p in sorted(path.iterdir()) if p.suffix.lower() in (".pgm", ".csv"))
        else:
            out.append(raw)
    return out


def cmd_detect(args) -> int:
    cfgs = configs(args)
    intr = None
    if args.intrinsics:
        try:
            intr = read_intrinsics(args.intrinsics, args.width, args.height)
        except (OSError, FrameError, ValueError) as exc:
            print(f"conicscan: {exc}", file=sys.stderr)
            return EXIT_IO
    paths = _inputs(args.inputs)
    if not paths:
        raise UsageError("no input frames")

    def run(item):
        i, path = item
        ts = i / args.fps
        try:
            frame = load_frame(path, intr, ts)
        except EmptyFrameError:
            return detection_record(i, path, ts, [], {})
        timings: dict = {}
        prims = detect_frame(frame, *cfgs, transpose=args.transpose, timings=timings)
        return detection_record(i, path, ts, prims, timings)

    out = sys.stdout
    writer = None
    if args.format == "csv":
        writer = csv.DictWriter(out, CSV_FIELDS)
        writer.writeheader()
    with ThreadPoolExecutor(thread_count()) as pool:
        try:
            for rec in pool.map(run, enumerate(paths)):
                if writer is None:
                    out.write(json.dumps(rec) + "\n")
                else:
                    writer.writerows(_csv_rows(rec))
        except FrameError as exc:
            print(f"conicscan: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def _write_table(rows, fmt, stream):
    if fmt == "jsonl":
        for r in rows:
            stream.write(json.dumps(_json_safe(_round(r))) + "\n")
        return
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    writer = csv.DictWriter(stream, keys)
    writer.writeheader()
    for r in rows:
        writer.writerow(_round(r))


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise FrameError(f"cannot write {path}: {exc}")


def cmd_experiment(args) -> int:
    cfgs = configs(args)
    name = args.name
    kwargs = {"seed": args.seed}
    if name in ("accuracy", "occlusion", "velocity"):
        kwargs["cfgs"] = cfgs
    if name == "noise":
        kwargs = {"seeds": args.trials or 50}
    elif name == "ransac":
        kwargs["trials"] = args.trials or 200
        kwargs["seg_cfg"] = cfgs[0]
    elif args.frames and name in ("accuracy", "occlusion"):
        kwargs["frames"] = args.frames
    rows = ex.EXPERIMENTS[name](**kwargs)
    if name == "ransac":
        inc = rows[0]["time_ms"]
        for r in rows[1:]:
            print(f"ransac n={r['samples']} ratio_min={r['ratio_min']}: k={r['k']}, "
                  f"{r['time_ms'] / inc:.0f}x slower than incremental", file=sys.stderr)
    stream = _open_out(args.output)
    try:
        _write_table(rows, args.format, stream)
    finally:
        if stream is not sys.stdout:
            stream.close()
    return EXIT_OK


def cmd_bench(args) -> int:
    cfgs = configs(args)
    sizes = [tuple(int(v) for v in s.lower().split("x")) for s in args.sizes]
    rows = ex.bench(sizes, frames=args.frames, seed=args.seed, noise=args.noise, cfgs=cfgs,
                    transpose=args.transpose)
    for r in rows:
        print(f"{r['width']}x{r['height']}: {r['ms_per_frame']:.1f} ms/frame ({r['fps']:.1f} fps); "
              f"segment {r['segment_ms']:.1f} ms, chain {r['chain_ms']:.1f} ms, "
              f"classify {r['classify_ms']:.1f} ms", file=sys.stderr)
    if rows and "scaling_exponent" in rows[0]:
        print(f"scaling exponent (runtime vs pixels): {rows[0]['scaling_exponent']:.3f}", file=sys.stderr)
    _write_table(rows, args.format, sys.stdout)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.scene:
        try:
            scene = load_scene(args.scene)
        except OSError as exc:
            print(f"conicscan: cannot read {args.scene}: {exc}", file=sys.stderr)
            return EXIT_IO
        except (ValueError, TypeError, KeyError, yaml.YAMLError) as exc:
            raise UsageError(f"bad scene file {args.scene}: {exc}")
        scene = replace(scene, seed=args.seed) if args.seed else scene
    else:
        scene = PRESETS[args.preset](args.noise, args.seed)
    intr = default_intrinsics(args.width, args.height)
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.dump_scene:
            dump_scene(scene, out / "scene.yaml")
        for i in range(args.frames):
            frame = render(scene, intr, t=i / args.fps)
            save_frame(frame, out / f"frame_{i:04d}.{args.ext}")
    except OSError as exc:
        print(f"conicscan: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {args.frames} frame(s) to {out}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conicscan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="detect primitives in depth frames (PGM or CSV, mm)")
    p.add_argument("inputs", nargs="+", help="frame files, directories, or - to read paths from stdin")
    p.add_argument("--intrinsics", help="sidecar with fx, fy, cx, cy (default: Kinect-like model)")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--fps", type=float, default=30.0, help="frame rate for timestamps")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("experiment", help="re-run one evaluation experiment on synthetic data")
    p.add_argument("name", choices=sorted(ex.EXPERIMENTS))
    p.add_argument("--trials", type=int, help="seeds (noise) or slices (ransac)")
    p.add_argument("--frames", type=int, help="frames per configuration (accuracy, occlusion)")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("bench", help="frame rate and scaling on synthetic frames")
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--sizes", nargs="+", default=["160x120", "320x240", "640x480"])
    p.add_argument("--noise", type=float, default=0.005, help="range noise sigma, m")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen", help="render synthetic depth frames")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scene", help="YAML scene description")
    src.add_argument("--preset", choices=sorted(PRESETS), default="paper")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--noise", type=float, default=0.005, help="range noise sigma, m (presets)")
    p.add_argument("--ext", choices=("pgm", "csv"), default="pgm")
    p.add_argument("--dump-scene", action="store_true", help="also write scene.yaml")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"conicscan: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FrameError as exc:
        print(f"conicscan: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
