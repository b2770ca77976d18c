"""Self-contained pipeline run on bundled synthetic data with the mock codec.

Builds a small grayscale image set with known ground truth, sweeps the mock
codec over the full QP grid, constructs the augmented manifest, synthesizes
detections whose weighted AP degrades predictably with QP, scores every cell,
and emits the BD report. Every artifact except the run metadata (which records
wall times) is byte-deterministic, so two runs in different directories must
produce identical report files.
"""
from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augmentation import build_augmented_manifest
from .codec import DEFAULT_QP_SWEEP, CodecProfile, QualityAxis, run_sweep, write_runs
from .datamodel import (
    ClassTable,
    DatasetManifest,
    ImageRecord,
    parse_detections,
    parse_ground_truth,
    validate_manifest,
)
from .detection_metrics import evaluate, metric_report_to_json
from .errors import DataError
from .quality import write_image
from .rd_pipeline import compare_methods, emit_report, load_pipeline_config

IMAGE_W, IMAGE_H = 96, 64
N_IMAGES = 6
N_CLASSES = 4  # first four entries of the default class table
INSTANCES_PER_CLASS = 12

# box grid: 4 columns (one class each) x 2 rows per image
_BOX_XS = (4, 28, 52, 76)
_BOX_YS = (6, 36)
_BOX_W, _BOX_H = 16, 20

# ground truth kept per class out of 12, by QP, plus the per-method bonus
_BASE_KEPT = {22: 10, 27: 9, 32: 8, 37: 7, 42: 6, 47: 5}
_METHOD_BONUS = {"classic": 0, "augmented": 1, "fine_tuned": 2}
_UNCOMPRESSED_KEPT = {"classic": 11, "augmented": 12, "fine_tuned": 12}

SIZE_BASE_BYTES = 16384


def mock_profile() -> CodecProfile:
    """Mock-codec profile invoking this interpreter, safe without PATH setup."""
    runner = f"{sys.executable} -m vcmbench.mock_codec"
    return CodecProfile(
        name="mock",
        encode_template=(
            f"{runner} encode --input {{input}} --output {{output}} --qp {{qp}} "
            f"--size-base-bytes {SIZE_BASE_BYTES}"
        ),
        decode_template=f"{runner} decode --input {{input}} --output {{output}}",
        quality_axis=QualityAxis(kind="qp_integer", lo=0, hi=63),
    )


def _synthetic_image(index: int) -> np.ndarray:
    ramp = np.linspace(40, 200, IMAGE_W, dtype=np.float64)
    img = np.tile(ramp, (IMAGE_H, 1)) + 5.0 * index
    img[8 * index % IMAGE_H : 8 * index % IMAGE_H + 6, :] += 20.0
    return np.clip(img, 0, 255).astype(np.uint8)


def write_synthetic_images(image_dir: Path) -> list[Path]:
    image_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(N_IMAGES):
        path = image_dir / f"img{i}.png"
        write_image(path, _synthetic_image(i))
        paths.append(path)
    return paths


def synthetic_ground_truth() -> dict:
    """Six images, twelve instances for each of four classes, one ignore region."""
    images = [
        {"id": f"img{i}", "width": IMAGE_W, "height": IMAGE_H} for i in range(N_IMAGES)
    ]
    annotations = []
    for i in range(N_IMAGES):
        for row, y in enumerate(_BOX_YS):
            for col, x in enumerate(_BOX_XS):
                annotations.append(
                    {
                        "image_id": f"img{i}",
                        "category_id": col,
                        "bbox": [x, y, _BOX_W, _BOX_H],
                        "ignore": False,
                    }
                )
    annotations.append(
        {"image_id": "img0", "category_id": 0, "bbox": [2, 56, 40, 7], "ignore": True}
    )
    table = ClassTable.default()
    return {"images": images, "annotations": annotations, "categories": table.to_json()}


def _gt_boxes_by_class() -> dict[int, list[tuple[str, list[float]]]]:
    by_class: dict[int, list[tuple[str, list[float]]]] = {c: [] for c in range(N_CLASSES)}
    for i in range(N_IMAGES):
        for y in _BOX_YS:
            for col, x in enumerate(_BOX_XS):
                by_class[col].append((f"img{i}", [float(x), float(y), float(_BOX_W), float(_BOX_H)]))
    return by_class


def synthetic_detections(method: str, qp: int | None) -> list[dict]:
    """Perfect detections on the first ``kept`` instances of every class.

    ``qp=None`` means the uncompressed evaluation. One low-score detection sits
    inside the ignore region and one is a plain false positive; neither moves
    the weighted AP, they only exercise those code paths.
    """
    if qp is None:
        kept = _UNCOMPRESSED_KEPT[method]
    else:
        kept = min(INSTANCES_PER_CLASS, _BASE_KEPT[qp] + _METHOD_BONUS[method])
    records = []
    for class_id, boxes in _gt_boxes_by_class().items():
        for image_id, bbox in boxes[:kept]:
            records.append(
                {"image_id": image_id, "category_id": class_id, "bbox": bbox, "score": 0.9}
            )
    records.append(
        {"image_id": "img0", "category_id": 0, "bbox": [4.0, 57.0, 10.0, 5.0], "score": 0.3}
    )
    records.append(
        {"image_id": "img3", "category_id": 1, "bbox": [1.0, 57.0, 10.0, 6.0], "score": 0.2}
    )
    return records


def expected_weighted_ap(method: str, qp: int | None) -> float:
    """Analytic weighted AP of the synthesized detections: kept / 12."""
    if qp is None:
        return _UNCOMPRESSED_KEPT[method] / INSTANCES_PER_CLASS
    kept = min(INSTANCES_PER_CLASS, _BASE_KEPT[qp] + _METHOD_BONUS[method])
    return kept / INSTANCES_PER_CLASS


@dataclass(frozen=True)
class SelftestResult:
    out_dir: Path
    report_files: dict[str, bytes]
    manifest: DatasetManifest
    n_cells: int


def run_selftest(out_dir: str | Path, parallelism: int = 4, log=None) -> SelftestResult:
    """Run the full pipeline under ``out_dir``; returns the report bytes."""
    say = log or (lambda msg: None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    say("writing synthetic images and ground truth")
    images = write_synthetic_images(out / "images")
    gt_doc = synthetic_ground_truth()
    gt_path = out / "gt.json"
    gt_path.write_text(json.dumps(gt_doc, indent=1, sort_keys=True))
    gt = parse_ground_truth(gt_path.read_text())

    say("sweeping the mock codec over the QP grid")
    profile = mock_profile()
    runs = run_sweep(images, profile, out / "runs", qps=DEFAULT_QP_SWEEP, parallelism=parallelism)
    write_runs(out / "runs", runs, profile)
    failed = [item for run in runs for item in run.items if item.status == "failed"]
    if failed:
        raise DataError(f"mock codec failed on {len(failed)} item(s): {failed[0].error}")

    say("building the augmented training manifest")
    pristine = [
        ImageRecord(image_id=p.stem, width=IMAGE_W, height=IMAGE_H, source_path=str(p))
        for p in images
    ]
    manifest = build_augmented_manifest("selftest", pristine, runs)
    (out / "manifest.json").write_text(manifest.to_json())
    report = validate_manifest(manifest)
    if not report.ok:
        raise DataError(f"selftest manifest failed validation: {report.violations}")

    say("synthesizing and scoring detections per (method, QP) cell")
    (out / "dets").mkdir(exist_ok=True)
    (out / "metrics").mkdir(exist_ok=True)
    methods = list(_METHOD_BONUS)
    config: dict = {
        "schema_version": 1,
        "variant": "mock_detector",
        "anchor": "classic",
        "qp_grid": list(DEFAULT_QP_SWEEP),
        "gt": "gt.json",
        "kind": "box",
        "methods": [],
    }
    n_cells = 0
    for method in methods:
        cells = []
        for qp, run in zip(DEFAULT_QP_SWEEP, runs):
            dets_rel = f"dets/{method}_qp{qp}.json"
            metrics_rel = f"metrics/{method}_qp{qp}.json"
            (out / dets_rel).write_text(
                json.dumps(synthetic_detections(method, qp), indent=1, sort_keys=True)
            )
            det_set = parse_detections((out / dets_rel).read_text(), gt.class_table)
            scored = evaluate(det_set, gt, kind="box")
            (out / metrics_rel).write_text(metric_report_to_json(scored, gt.class_table))
            cells.append(
                {
                    "qp": qp,
                    "detections": dets_rel,
                    "metrics": metrics_rel,
                    "bitrate": {"run_dir": "runs", "qp": qp},
                }
            )
            n_cells += 1
        baseline_dets = parse_detections(
            json.dumps(synthetic_detections(method, None)), gt.class_table
        )
        baseline = evaluate(baseline_dets, gt, kind="box").weighted_ap
        config["methods"].append(
            {"name": method, "baseline_uncompressed": baseline, "cells": cells}
        )
    config_path = out / "config.json"
    config_path.write_text(json.dumps(config, indent=1, sort_keys=True))

    say("comparing methods against the anchor and emitting the report")
    cfg = load_pipeline_config(config_path)
    comparison = compare_methods(
        cfg.variant, cfg.anchor, cfg.cells_by_method, baselines=cfg.baselines
    )
    written = emit_report(comparison, out / "report")

    report_files = {path.name: path.read_bytes() for path in written}
    return SelftestResult(
        out_dir=out, report_files=report_files, manifest=manifest, n_cells=n_cells
    )
