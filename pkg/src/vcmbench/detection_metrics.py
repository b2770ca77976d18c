"""Greedy matching, precision-recall curves, per-class AP, and weighted AP.

Matching follows the established instance-evaluation protocol: detections are
processed in descending score order (ties broken by stable input order), each
taking the highest-IoU unmatched non-ignored ground-truth object at or above
the IoU threshold. A detection that finds no such object may instead be
absorbed by an ignore region, in which case it is excluded from precision
accounting; otherwise it is a false positive. Overlap with an ignore region is
measured as intersection over the detection's own area, since group regions
are typically much larger than any single object.

AP uses all-point interpolation: cumulative precision is replaced by its
monotone non-increasing envelope and integrated over recall increments.
Per-class AP is averaged over the IoU threshold sweep 0.50:0.05:0.95.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .datamodel import Detection, DetectionSet, GroundTruthSet, GtInstance
from .errors import DataError
from .geometry import (
    bbox_intersection_area,
    bbox_iou,
    mask_intersection_area,
    mask_iou,
)

# Exact literals so that an overlap of e.g. 0.6 compares equal to the threshold.
DEFAULT_IOU_THRESHOLDS = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)

TP, FP, IGNORED = "tp", "fp", "ignored"


@dataclass(frozen=True)
class DetectionOutcome:
    """Fate of one detection after matching."""

    order_key: int  # caller-supplied stable position, used for score tie-breaks
    score: float
    flag: str  # "tp" | "fp" | "ignored"
    matched_gt: int | None  # index into the ground-truth list handed to the matcher
    iou: float


@dataclass(frozen=True)
class MatchResult:
    """Outcomes in descending-score order plus the effective GT count."""

    outcomes: tuple[DetectionOutcome, ...]
    n_gt_effective: int


def _pair_overlap(det: Detection, gt: GtInstance, kind: str, crowd: bool) -> float:
    """IoU for regular objects; intersection over detection area for ignore regions."""
    if kind == "box" or (kind == "mask" and gt.mask() is None):
        if crowd:
            area = det.bbox[2] * det.bbox[3]
            if area <= 0:
                return 0.0
            return bbox_intersection_area(det.bbox, gt.bbox) / area
        return bbox_iou(det.bbox, gt.bbox)
    if det.mask is None:
        raise DataError("mask matching requested but a detection has no mask")
    gt_mask = gt.mask()
    if crowd:
        area = det.mask.area()
        if area <= 0:
            return 0.0
        return mask_intersection_area(det.mask, gt_mask) / area
    return mask_iou(det.mask, gt_mask)


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GtInstance],
    iou_threshold: float,
    kind: str = "box",
    order_keys: Sequence[int] | None = None,
) -> MatchResult:
    """Greedily assign detections of one image and one class to ground truth.

    Among equal-IoU candidates the ground-truth object listed first wins,
    making results reproducible bit for bit.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise DataError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    if kind not in ("box", "mask"):
        raise DataError(f"kind must be 'box' or 'mask', got {kind!r}")
    keys = list(order_keys) if order_keys is not None else list(range(len(dets)))
    if len(keys) != len(dets):
        raise DataError("order_keys must parallel the detection list")

    regular = [i for i, g in enumerate(gts) if not g.ignore]
    ignores = [i for i, g in enumerate(gts) if g.ignore]

    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, keys[i]))
    taken: set[int] = set()
    outcomes = []
    for i in order:
        det = dets[i]
        best_gt, best_iou = None, 0.0
        for g in regular:  # ascending index, so the first of equal-IoU candidates wins
            if g in taken:
                continue
            iou = _pair_overlap(det, gts[g], kind, crowd=False)
            if iou > best_iou:
                best_gt, best_iou = g, iou
        if best_gt is not None and best_iou >= iou_threshold:
            taken.add(best_gt)
            outcomes.append(DetectionOutcome(keys[i], det.score, TP, best_gt, best_iou))
            continue

        best_ig, best_ov = None, 0.0
        for g in ignores:
            ov = _pair_overlap(det, gts[g], kind, crowd=True)
            if ov > best_ov:
                best_ig, best_ov = g, ov
        if best_ig is not None and best_ov >= iou_threshold:
            outcomes.append(DetectionOutcome(keys[i], det.score, IGNORED, best_ig, best_ov))
        else:
            outcomes.append(DetectionOutcome(keys[i], det.score, FP, None, best_iou))

    return MatchResult(outcomes=tuple(outcomes), n_gt_effective=len(regular))


def average_precision(results: Sequence[MatchResult], n_gt: int) -> float:
    """Area under the enveloped precision-recall curve, all-point interpolation.

    ``results`` are per-image match results for one class at one threshold;
    ``n_gt`` is the effective (non-ignored) ground-truth count across images.
    """
    if n_gt < 1:
        raise DataError("average_precision requires at least one ground-truth instance")
    scored = [
        (out.score, out.order_key, out.flag)
        for res in results
        for out in res.outcomes
        if out.flag != IGNORED
    ]
    if not scored:
        return 0.0
    scored.sort(key=lambda t: (-t[0], t[1]))
    tp = np.cumsum([1 if flag == TP else 0 for _, _, flag in scored])
    fp = np.cumsum([1 if flag == FP else 0 for _, _, flag in scored])
    precision = tp / (tp + fp)
    recall = tp / n_gt
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    increments = np.diff(recall, prepend=0.0)
    return float(np.sum(increments * envelope))


@dataclass(frozen=True)
class ApBreakdown:
    """Per-class AP over the threshold sweep; absent classes carry no AP at all."""

    per_class: dict[int, float]
    per_class_by_threshold: dict[int, dict[float, float]]
    n_instances: dict[int, int]
    thresholds: tuple[float, ...]
    absent_classes: tuple[int, ...] = ()

    def classes(self) -> tuple[int, ...]:
        return tuple(sorted(self.per_class))


def ap_per_class(
    det_set: DetectionSet,
    gt_set: GroundTruthSet,
    thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
    kind: str = "box",
    min_gt_area: float | None = None,
) -> ApBreakdown:
    """Evaluate every class present in the ground truth at every threshold.

    ``min_gt_area`` optionally demotes ground-truth boxes smaller than the
    given pixel area to ignore regions, mirroring size-filtered protocols.
    """
    thresholds = tuple(thresholds)
    if not thresholds or list(thresholds) != sorted(set(thresholds)):
        raise DataError("thresholds must be non-empty, ascending, and unique")

    instances = list(gt_set.instances)
    if min_gt_area is not None:
        instances = [
            inst
            if inst.ignore or inst.bbox[2] * inst.bbox[3] >= min_gt_area
            else GtInstance(inst.image_id, inst.class_id, inst.bbox, ignore=True,
                            _mask_source=inst._mask_source)
            for inst in instances
        ]

    gts_by_img_class: dict[tuple[str, int], list[GtInstance]] = {}
    for inst in instances:
        gts_by_img_class.setdefault((inst.image_id, inst.class_id), []).append(inst)
    dets_by_img_class: dict[tuple[str, int], list[tuple[int, Detection]]] = {}
    for pos, det in enumerate(det_set.detections):
        dets_by_img_class.setdefault((det.image_id, det.class_id), []).append((pos, det))

    counts: dict[int, int] = {}
    for inst in instances:
        if not inst.ignore:
            counts[inst.class_id] = counts.get(inst.class_id, 0) + 1
    present = sorted(counts)
    absent = sorted(
        {inst.class_id for inst in instances}.union(d.class_id for d in det_set.detections)
        - set(present)
    )

    image_ids = {rec.image_id for rec in gt_set.images}
    unknown = {det.image_id for det in det_set.detections} - image_ids
    if unknown:
        raise DataError(
            f"detections reference image(s) absent from the ground truth: {sorted(unknown)[:5]}"
        )
    per_class: dict[int, float] = {}
    by_threshold: dict[int, dict[float, float]] = {}
    for cid in present:
        ap_values = {}
        for thr in thresholds:
            results = []
            for image_id in sorted(image_ids):
                gts = gts_by_img_class.get((image_id, cid), [])
                pairs = dets_by_img_class.get((image_id, cid), [])
                if not gts and not pairs:
                    continue
                results.append(
                    match_detections(
                        [d for _, d in pairs],
                        gts,
                        thr,
                        kind=kind,
                        order_keys=[pos for pos, _ in pairs],
                    )
                )
            ap_values[thr] = average_precision(results, counts[cid])
        by_threshold[cid] = ap_values
        per_class[cid] = float(np.mean(list(ap_values.values())))

    return ApBreakdown(
        per_class=per_class,
        per_class_by_threshold=by_threshold,
        n_instances={cid: counts[cid] for cid in present},
        thresholds=thresholds,
        absent_classes=tuple(absent),
    )


def class_weights(gt_set: GroundTruthSet, mode: str = "instances") -> dict[int, float]:
    """Per-class weights proportional to how often each class appears.

    ``mode="instances"`` counts labeled objects (the default);
    ``mode="image_presence"`` counts images containing the class instead.
    Weights sum to 1.
    """
    if mode == "instances":
        counts = gt_set.counts_per_class()
    elif mode == "image_presence":
        counts = gt_set.image_presence_per_class()
    else:
        raise DataError(f"unknown weight mode {mode!r}")
    total = sum(counts.values())
    if total == 0:
        raise DataError("cannot derive class weights from empty ground truth")
    return {cid: n / total for cid, n in sorted(counts.items())}


def weighted_ap(breakdown: ApBreakdown | Mapping[int, float], weights: Mapping[int, float]) -> float:
    """Weighted mean of per-class APs, renormalized over the classes present."""
    per_class = breakdown.per_class if isinstance(breakdown, ApBreakdown) else dict(breakdown)
    if not per_class:
        raise DataError("no classes present in the AP breakdown")
    missing = [cid for cid in per_class if cid not in weights]
    if missing:
        raise DataError(f"weights missing for classes {missing}")
    num = 0.0
    den = 0.0
    for cid in sorted(per_class):
        num += weights[cid] * per_class[cid]
        den += weights[cid]
    if den <= 0:
        raise DataError("class weights must have a positive sum")
    return num / den


# ---------------------------------------------------------------------------
# One-call evaluation plus the metric interchange document
# ---------------------------------------------------------------------------

METRICS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MetricReport:
    """Everything scored for one (method, quality) cell."""

    breakdown: ApBreakdown
    weights: dict[int, float]
    weighted_ap: float
    kind: str
    weight_mode: str


def evaluate(
    det_set: DetectionSet,
    gt_set: GroundTruthSet,
    kind: str = "box",
    thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
    weight_mode: str = "instances",
    min_gt_area: float | None = None,
) -> MetricReport:
    breakdown = ap_per_class(det_set, gt_set, thresholds=thresholds, kind=kind,
                             min_gt_area=min_gt_area)
    weights = class_weights(gt_set, mode=weight_mode)
    return MetricReport(
        breakdown=breakdown,
        weights=weights,
        weighted_ap=weighted_ap(breakdown, weights),
        kind=kind,
        weight_mode=weight_mode,
    )


def metric_report_to_json(report: MetricReport, class_table=None) -> str:
    def label(cid: int) -> str:
        return class_table.name_of(cid) if class_table is not None else str(cid)

    bd = report.breakdown
    doc = {
        "schema_version": METRICS_SCHEMA_VERSION,
        "kind": report.kind,
        "weight_mode": report.weight_mode,
        "iou_thresholds": list(bd.thresholds),
        "weighted_ap": report.weighted_ap,
        "per_class": {
            label(cid): {
                "class_id": cid,
                "ap": bd.per_class[cid],
                "ap_by_threshold": {f"{thr:.2f}": ap for thr, ap in bd.per_class_by_threshold[cid].items()},
                "n_instances": bd.n_instances[cid],
                "weight": report.weights[cid],
            }
            for cid in bd.classes()
        },
        "absent_classes": [label(cid) for cid in bd.absent_classes],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def parse_metric_report(data: bytes | str) -> MetricReport:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    doc = json.loads(data)
    version = doc.get("schema_version")
    if version != METRICS_SCHEMA_VERSION:
        raise DataError(f"unsupported metrics schema_version {version!r}")
    per_class = {}
    by_thr = {}
    counts = {}
    weights = {}
    for entry in doc["per_class"].values():
        cid = int(entry["class_id"])
        per_class[cid] = float(entry["ap"])
        by_thr[cid] = {float(t): float(v) for t, v in entry["ap_by_threshold"].items()}
        counts[cid] = int(entry["n_instances"])
        weights[cid] = float(entry["weight"])
    breakdown = ApBreakdown(
        per_class=per_class,
        per_class_by_threshold=by_thr,
        n_instances=counts,
        thresholds=tuple(doc["iou_thresholds"]),
    )
    return MetricReport(
        breakdown=breakdown,
        weights=weights,
        weighted_ap=float(doc["weighted_ap"]),
        kind=str(doc["kind"]),
        weight_mode=str(doc.get("weight_mode", "instances")),
    )
