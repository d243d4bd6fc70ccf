"""Command-line entry point: synth-scenes, generate, stats, eval.

Exit codes: 0 success, 1 usage error, 2 infeasible targets (the
sampler ran out of proposal budget), 3 I/O or input-file error.
Diagnostics go to stderr; machine-readable output goes to files or
stdout only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import resources

from . import __version__
from .coco import parse_dataset, scenes_from_dataset, serialize_dataset
from .config import GenerationConfig
from .errors import (InfeasibleTargetsError, ParseError, PosecropError,
                     RasterError, ReferentialError, SceneTooSmallError,
                     SchemaError)
from .evaluate import load_detections, match_and_score
from .raster import FileRasterSource, NullRasterSource, ProceduralRasterSource
from .sampler import sample_dataset
from .scenegen import SceneGenParams, generate_scene, procedural_raster, scenes_to_dataset
from .stats import dataset_stats, format_stats_report
from .synthesize import assign_splits, emit_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_IO = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="posecrop",
                     description="Generate and evaluate distribution-targeted "
                                 "human-pose crop datasets.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-scenes", help="write synthetic annotated scenes")
    p.add_argument("--out", required=True, help="output annotation JSON path")
    p.add_argument("--seeds", default="1-20",
                   help="scene seeds, e.g. '1-20' or '1,4,9' (default 1-20)")
    p.add_argument("--width", type=int, default=SceneGenParams.width)
    p.add_argument("--height", type=int, default=SceneGenParams.height)
    p.add_argument("--persons", type=int, default=SceneGenParams.n_persons)
    p.add_argument("--clusters", type=int, default=SceneGenParams.cluster_count)
    p.add_argument("--cluster-spread", type=float, default=SceneGenParams.cluster_spread)
    p.add_argument("--cluster-fraction", type=float,
                   default=SceneGenParams.cluster_fraction)
    p.add_argument("--raster-dir", default=None,
                   help="also render each scene's procedural raster as PNG")

    p = sub.add_parser("generate", help="sample crops and emit a dataset")
    p.add_argument("--scenes", required=True, help="annotated scenes (COCO JSON)")
    p.add_argument("--config", required=True,
                   help="generation config JSON path, or a bundled name "
                        "such as 'panda_pose.json'")
    p.add_argument("--seed", type=int, required=True, help="run seed (reproducibility)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--annotations-only", action="store_true",
                   help="skip raster extraction; write annotation files only")
    p.add_argument("--downscale-to", default=None, metavar="WxH",
                   help="downscale emitted crops to a fixed size")
    p.add_argument("--dataset-size", type=int, default=None,
                   help="override the config's dataset_size")
    p.add_argument("--raster-mode", choices=("auto", "files", "procedural"),
                   default="auto",
                   help="pixel source for extraction (default: files when the "
                        "scene images exist on disk, else procedural)")

    p = sub.add_parser("stats", help="measure distribution statistics")
    p.add_argument("annotations", help="annotation JSON path")
    p.add_argument("--json-out", default=None, help="write the JSON report here "
                                                    "instead of stdout")

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth annotation JSON")
    p.add_argument("--dt", required=True, help="detection results JSON")
    p.add_argument("--max-dets", type=int, default=20,
                   help="detection cap per image (default 20)")

    return parser


def _parse_seed_list(text: str) -> list[int]:
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise _UsageError(f"no seeds in '{text}'")
    return seeds


def _parse_dims(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x", 1)
        return int(w), int(h)
    except ValueError as e:
        raise _UsageError(f"expected WxH, got '{text}'") from e


def _load_config(path: str) -> GenerationConfig:
    if not os.path.exists(path):
        bundled = resources.files("posecrop").joinpath("configs", path)
        if bundled.is_file():
            return GenerationConfig.from_json(bundled.read_text())
        raise FileNotFoundError(f"config '{path}' not found on disk or in "
                                f"bundled configs")
    with open(path, encoding="utf-8") as fh:
        return GenerationConfig.from_json(fh.read())


def _cmd_synth_scenes(args) -> int:
    seeds = _parse_seed_list(args.seeds)
    scenes = []
    for seed in seeds:
        params = SceneGenParams(
            width=args.width, height=args.height, n_persons=args.persons,
            cluster_count=args.clusters, cluster_spread=args.cluster_spread,
            cluster_fraction=args.cluster_fraction, seed=seed,
        )
        scenes.append(generate_scene(params))
    out_dir = os.path.dirname(os.path.abspath(args.out))
    file_names = None
    if args.raster_dir:
        from PIL import Image

        from .geometry import Rect

        os.makedirs(args.raster_dir, exist_ok=True)
        # uris must resolve relative to the scenes file
        rel = os.path.relpath(os.path.abspath(args.raster_dir), out_dir)
        file_names = {}
        for scene in scenes:
            block = procedural_raster(
                scene, Rect(0.0, 0.0, float(scene.width), float(scene.height)))
            Image.fromarray(block).save(os.path.join(args.raster_dir, scene.uri))
            file_names[scene.id] = os.path.normpath(os.path.join(rel, scene.uri))
    dataset = scenes_to_dataset(scenes, file_names)
    os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(serialize_dataset(dataset))
    print(f"wrote {len(scenes)} scenes "
          f"({sum(len(s.persons) for s in scenes)} persons) to {args.out}",
          file=sys.stderr)
    return EXIT_OK


def _cmd_generate(args) -> int:
    with open(args.scenes, encoding="utf-8") as fh:
        scene_set = parse_dataset(fh.read())
    scenes_dir = os.path.dirname(os.path.abspath(args.scenes))
    scenes = scenes_from_dataset(scene_set)

    cfg = _load_config(args.config)
    overrides: dict = {"seed": args.seed}
    if args.dataset_size is not None:
        overrides["dataset_size"] = args.dataset_size
    if args.downscale_to is not None:
        overrides["downscale_to"] = _parse_dims(args.downscale_to)
    cfg = GenerationConfig.from_dict({**cfg.to_dict(), **overrides})

    if args.annotations_only:
        src = NullRasterSource()
    else:
        mode = args.raster_mode
        if mode == "auto":
            first = os.path.join(scenes_dir, scenes[0].uri) if scenes else ""
            mode = "files" if first and os.path.exists(first) else "procedural"
        src = (FileRasterSource(scenes_dir) if mode == "files"
               else ProceduralRasterSource())

    started = time.monotonic()

    def progress(done, total):
        if done % max(1, total // 10) == 0 or done == total:
            print(f"accepted {done}/{total} crops", file=sys.stderr)

    records = sample_dataset(scenes, cfg, workers=max(1, args.workers),
                             on_progress=progress)
    splits = assign_splits(records, cfg)
    emit_dataset(records, splits, {s.id: s for s in scenes}, src, args.out, cfg,
                 tool_version=__version__)
    elapsed = time.monotonic() - started
    print(f"generated {len(records)} crops into {args.out} "
          f"in {elapsed:.1f}s", file=sys.stderr)
    return EXIT_OK


def _cmd_stats(args) -> int:
    with open(args.annotations, encoding="utf-8") as fh:
        dataset = parse_dataset(fh.read())
    stats = dataset_stats(dataset)
    report = json.dumps(stats.to_dict(), indent=2)
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            fh.write(report + "\n")
    else:
        print(report)
    print(format_stats_report(stats, label=os.path.basename(args.annotations)),
          file=sys.stderr)
    return EXIT_OK


def _cmd_eval(args) -> int:
    with open(args.gt, encoding="utf-8") as fh:
        gts = parse_dataset(fh.read())
    with open(args.dt, encoding="utf-8") as fh:
        dets = load_detections(fh.read())
    result = match_and_score(dets, gts, max_detections=args.max_dets)
    print(json.dumps(result.to_dict(), indent=2))
    print(f"AP {result.ap:.1f}  AR {result.ar:.1f}  F1 {result.f1:.1f} "
          f"(cap {args.max_dets})", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "synth-scenes": _cmd_synth_scenes,
    "generate": _cmd_generate,
    "stats": _cmd_stats,
    "eval": _cmd_eval,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleTargetsError as e:
        print(f"error: {e}", file=sys.stderr)
        print("running statistics at exhaustion:", file=sys.stderr)
        print(json.dumps(e.snapshot, indent=2), file=sys.stderr)
        return EXIT_INFEASIBLE
    except SceneTooSmallError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ParseError, SchemaError, ReferentialError, RasterError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except PosecropError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


def main(argv: list[str] | None = None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
