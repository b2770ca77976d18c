"""vcm-bench: compress, manifest, score, bd, report, and selftest subcommands.

Exit codes: 0 success, 1 usage error, 2 data error, 3 codec execution error.
"""
from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from . import __version__
from .augmentation import build_augmented_manifest, build_finetune_schedule
from .codec import CodecProfile, load_runs, run_sweep, write_runs
from .datamodel import ImageRecord, parse_detections, parse_ground_truth
from .detection_metrics import DEFAULT_IOU_THRESHOLDS, evaluate, metric_report_to_json
from .errors import CodecError, DataError, VcmBenchError
from .rd_pipeline import compare_methods, emit_report, load_pipeline_config, render_markdown
from .selftest import run_selftest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CODEC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems instead of exiting with 2."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> _Parser:
    parser = _Parser(prog="vcm-bench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vcm-bench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    compress = sub.add_parser("compress", help="sweep an external codec over an image set")
    compress.add_argument("--profile", required=True, help="codec profile JSON")
    compress.add_argument("--in", dest="input_dir", required=True, help="input image directory")
    compress.add_argument("--out", required=True, help="output directory for bitstreams")
    compress.add_argument("--qps", default="22,27,32,37,42,47", help="comma-separated quality values")
    compress.add_argument("--glob", default="*.png", help="input filename pattern")
    compress.add_argument("-j", "--jobs", type=int, default=1, help="parallel workers")
    compress.add_argument("--strict", action="store_true", help="fail the run if any item fails")
    compress.set_defaults(func=cmd_compress)

    manifest = sub.add_parser("manifest", help="emit a training manifest or schedule")
    manifest.add_argument("--mode", required=True, choices=["augment", "finetune"])
    manifest.add_argument("--runs", help="compress output directory (augment mode)")
    manifest.add_argument("--name", default="dataset")
    manifest.add_argument("--detector", default="faster_rcnn")
    manifest.add_argument("--iterations", type=int, default=None)
    manifest.add_argument("--pristine-iters", type=int, default=None)
    manifest.add_argument("--finetune-iters", type=int, default=None)
    manifest.add_argument("--out", required=True)
    manifest.set_defaults(func=cmd_manifest)

    score = sub.add_parser("score", help="evaluate detections against ground truth")
    score.add_argument("--gt", help="ground truth JSON")
    score.add_argument("--dets", help="detections JSON")
    score.add_argument("--config", help="pipeline config; scores every cell with detections")
    score.add_argument("--kind", choices=["box", "mask"], default="box")
    score.add_argument("--weight-mode", choices=["instances", "image_presence"], default="instances")
    score.add_argument("--min-gt-area", type=float, default=None)
    score.add_argument("--out", help="metrics JSON output (single-pair mode)")
    score.set_defaults(func=cmd_score)

    bd = sub.add_parser("bd", help="Bjontegaard deltas between methods in a config")
    bd.add_argument("--config", required=True)
    bd.add_argument("--anchor", required=True, help="anchor method name")
    bd.add_argument("--subset", choices=["standard", "low", "both"], default="both")
    bd.add_argument("--out", help="write the comparison report JSON here")
    bd.set_defaults(func=cmd_bd)

    report = sub.add_parser("report", help="emit report files for a config")
    report.add_argument("--config", required=True)
    report.add_argument(
        "--format", action="append", choices=["md", "csv", "plotdata", "all"], default=None
    )
    report.add_argument("--anchor", help="override the config anchor")
    report.add_argument("--out", required=True, help="output directory")
    report.set_defaults(func=cmd_report)

    selftest = sub.add_parser("selftest", help="run the full pipeline on bundled synthetic data")
    selftest.add_argument("--out", help="working directory (default: a fresh temp dir)")
    selftest.add_argument("-j", "--jobs", type=int, default=4)
    selftest.set_defaults(func=cmd_selftest)

    return parser


def cmd_compress(args) -> int:
    profile = CodecProfile.load(args.profile)
    qps = [float(q) for q in args.qps.split(",") if q.strip()]
    images = sorted(Path(args.input_dir).glob(args.glob))
    if not images:
        raise DataError(f"no images matching {args.glob!r} under {args.input_dir}")
    runs = run_sweep(
        images, profile, args.out, qps=qps, parallelism=args.jobs, strict=args.strict
    )
    write_runs(args.out, runs, profile)
    items = [item for run in runs for item in run.items]
    executed = sum(1 for i in items if i.status == "ok")
    cached = sum(1 for i in items if i.status == "cached")
    failed = sum(1 for i in items if i.status == "failed")
    print(f"{len(items)} items: {executed} executed, {cached} cached, {failed} failed")
    # failures are isolated per item; only --strict turns them into a run failure,
    # which run_sweep signals by raising before we get here
    return EXIT_OK


def cmd_manifest(args) -> int:
    if args.mode == "augment":
        if not args.runs:
            raise UsageError("vcm-bench manifest: --runs is required in augment mode")
        runs = load_runs(args.runs)
        by_id: dict[str, ImageRecord] = {}
        for run in runs:
            for item in run.items:
                if item.image_id not in by_id:
                    by_id[item.image_id] = ImageRecord(
                        image_id=item.image_id,
                        width=item.width,
                        height=item.height,
                        source_path=item.input_path,
                    )
        manifest = build_augmented_manifest(
            args.name,
            sorted(by_id.values(), key=lambda r: r.image_id),
            runs,
            detector=args.detector,
            iterations=args.iterations,
        )
        Path(args.out).write_text(manifest.to_json())
        print(f"wrote manifest with {len(manifest.images)} image records to {args.out}")
    else:
        schedule = build_finetune_schedule(
            detector=args.detector,
            pristine_iters=args.pristine_iters,
            finetune_iters=args.finetune_iters,
        )
        Path(args.out).write_text(schedule.to_json())
        print(
            f"wrote {schedule.detector} schedule "
            f"({' + '.join(str(p.iterations) for p in schedule.phases)} iterations) to {args.out}"
        )
    return EXIT_OK


def cmd_score(args) -> int:
    if args.config:
        cfg_path = Path(args.config)
        doc = json.loads(cfg_path.read_text())
        base = cfg_path.parent
        gt = parse_ground_truth((base / doc["gt"]).read_bytes())
        kind = doc.get("kind", args.kind)
        n = 0
        for method in doc["methods"]:
            for cell in method["cells"]:
                dets = parse_detections((base / cell["detections"]).read_bytes(), gt.class_table)
                result = evaluate(
                    dets, gt, kind=kind, weight_mode=args.weight_mode,
                    min_gt_area=args.min_gt_area,
                )
                (base / cell["metrics"]).parent.mkdir(parents=True, exist_ok=True)
                (base / cell["metrics"]).write_text(metric_report_to_json(result, gt.class_table))
                n += 1
        print(f"scored {n} cells from {args.config}")
        return EXIT_OK

    if not args.gt or not args.dets:
        raise UsageError("vcm-bench score: either --config or both --gt and --dets are required")
    gt = parse_ground_truth(Path(args.gt).read_bytes())
    dets = parse_detections(Path(args.dets).read_bytes(), gt.class_table)
    result = evaluate(
        dets, gt, kind=args.kind, thresholds=DEFAULT_IOU_THRESHOLDS,
        weight_mode=args.weight_mode, min_gt_area=args.min_gt_area,
    )
    payload = metric_report_to_json(result, gt.class_table)
    if args.out:
        Path(args.out).write_text(payload)
    else:
        print(payload)
    print(f"weighted AP: {result.weighted_ap:.4f}", file=sys.stderr)
    return EXIT_OK


_SUBSET_FLAG = {"standard": ("standard",), "low": ("low_bitrate",), "both": ("standard", "low_bitrate")}


def cmd_bd(args) -> int:
    cfg = load_pipeline_config(args.config)
    report = compare_methods(
        cfg.variant,
        args.anchor,
        cfg.cells_by_method,
        baselines=cfg.baselines,
        subsets=_SUBSET_FLAG[args.subset],
    )
    print(render_markdown([report]))
    if args.out:
        Path(args.out).write_text(report.to_json())
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = load_pipeline_config(args.config)
    anchor = args.anchor or cfg.anchor
    comparison = compare_methods(cfg.variant, anchor, cfg.cells_by_method, baselines=cfg.baselines)
    fmt_map = {"md": "markdown", "csv": "csv", "plotdata": "plotdata"}
    chosen = args.format or ["all"]
    if "all" in chosen:
        formats = ("markdown", "csv", "plotdata")
    else:
        formats = tuple(dict.fromkeys(fmt_map[f] for f in chosen))
    written = emit_report(comparison, args.out, formats=formats)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    out_dir = args.out or tempfile.mkdtemp(prefix="vcm-selftest-")
    result = run_selftest(out_dir, parallelism=args.jobs, log=lambda msg: print(f"  - {msg}"))
    print(f"selftest OK: {result.n_cells} cells scored, report under {result.out_dir / 'report'}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except CodecError as exc:
        print(f"codec error: {exc}", file=sys.stderr)
        return EXIT_CODEC
    except (VcmBenchError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
