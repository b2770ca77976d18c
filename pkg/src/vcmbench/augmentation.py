"""Builds the two compression-robust training regimes as manifests.

Nothing here launches training. The outputs are machine-readable descriptors:
a mixed manifest interleaving pristine images with their compressed variants
at every quality level, or a two-phase schedule that trains on pristine data
first and then switches entirely to compressed data. Iteration defaults match
the reference setup for the two supported detector families.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .codec import CompressionRun
from .datamodel import ClassTable, DatasetManifest, ImageRecord
from .errors import DataError

SCHEDULE_SCHEMA_VERSION = 1

PHASE_LABELS = ("pristine", "compressed", "mixed")

# Iteration budgets per detector family: mixed-augmentation totals, the
# pristine pre-training lengths, and the shared fine-tuning extension.
DEFAULT_AUGMENT_ITERATIONS = {"faster_rcnn": 35_000, "mask_rcnn": 34_000}
DEFAULT_PRETRAIN_ITERATIONS = {"faster_rcnn": 25_000, "mask_rcnn": 24_000}
DEFAULT_FINETUNE_ITERATIONS = 10_000

DEFAULT_HYPERPARAMETERS = {
    "faster_rcnn": {"learning_rate": 0.00025, "batch_size": 7},
    "mask_rcnn": {
        "learning_rate": 0.01,
        "batch_size": 2,
        "learning_rate_schedule": {"value_after_decay": 0.001, "decay_at_iteration": 18_000},
    },
}


@dataclass(frozen=True)
class TrainingPhase:
    """One contiguous block of training iterations over a selected image set."""

    label: str  # "pristine" | "compressed" | "mixed"
    selector: str  # "pristine" | "compressed_all" | "all"
    iterations: int
    order: int

    def __post_init__(self) -> None:
        if self.label not in PHASE_LABELS:
            raise DataError(f"unknown phase label {self.label!r}")
        if self.iterations <= 0:
            raise DataError(f"phase {self.label!r}: iterations must be positive")

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "selector": self.selector,
            "iterations": self.iterations,
            "order": self.order,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "TrainingPhase":
        return cls(
            label=str(obj["label"]),
            selector=str(obj["selector"]),
            iterations=int(obj["iterations"]),
            order=int(obj["order"]),
        )


@dataclass(frozen=True)
class TrainingSchedule:
    """Ordered phases plus the hyperparameters carried along as provenance."""

    detector: str
    phases: tuple[TrainingPhase, ...]
    hyperparameters: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        orders = [p.order for p in self.phases]
        if orders != sorted(orders) or len(set(orders)) != len(orders):
            raise DataError("phase order indices must be unique and ascending")

    @property
    def total_iterations(self) -> int:
        return sum(p.iterations for p in self.phases)

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": SCHEDULE_SCHEMA_VERSION,
                "detector": self.detector,
                "phases": [p.to_json() for p in self.phases],
                "total_iterations": self.total_iterations,
                "hyperparameters": dict(self.hyperparameters),
            },
            indent=1,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, data: bytes | str) -> "TrainingSchedule":
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        doc = json.loads(data)
        version = doc.get("schema_version")
        if version != SCHEDULE_SCHEMA_VERSION:
            raise DataError(f"unsupported schedule schema_version {version!r}")
        return cls(
            detector=str(doc["detector"]),
            phases=tuple(TrainingPhase.from_json(p) for p in doc["phases"]),
            hyperparameters=doc.get("hyperparameters", {}),
        )


def _default_hyperparameters(detector: str) -> dict:
    return dict(DEFAULT_HYPERPARAMETERS.get(detector, {}))


def build_augmented_manifest(
    name: str,
    pristine: Sequence[ImageRecord],
    runs: Sequence[CompressionRun],
    class_table: ClassTable | None = None,
    detector: str = "faster_rcnn",
    iterations: int | None = None,
) -> DatasetManifest:
    """Mixed-training manifest: the pristine set plus every compressed variant.

    Every run must cover the full pristine set so each quality level
    contributes exactly as many images as the pristine data. Coverage gaps
    raise with the missing (image, quality) pairs listed.
    """
    if not pristine:
        raise DataError("pristine image set must not be empty")
    if not runs:
        raise DataError("at least one compression run is required for augmentation")
    pristine_ids = [rec.image_id for rec in pristine]
    if len(set(pristine_ids)) != len(pristine_ids):
        raise DataError("pristine image ids must be unique")
    pristine_by_id = {rec.image_id: rec for rec in pristine}

    missing: list[tuple[str, float]] = []
    for run in runs:
        covered = {item.image_id for item in run.items if item.status != "failed"}
        for image_id in pristine_ids:
            if image_id not in covered:
                missing.append((image_id, run.quality_param))
    if missing:
        listed = ", ".join(f"({img}, q={q:g})" for img, q in missing[:20])
        raise DataError(f"compression runs do not cover the pristine set: {listed}")

    images = list(pristine)
    provenance = []
    for run in sorted(runs, key=lambda r: r.quality_param):
        for item in sorted(run.items, key=lambda i: i.image_id):
            if item.status == "failed" or item.image_id not in pristine_by_id:
                continue
            src = pristine_by_id[item.image_id]
            q = item.quality_param
            qstr = str(int(q)) if float(q).is_integer() else str(q)
            images.append(
                ImageRecord(
                    image_id=f"{item.image_id}_qp{qstr}",
                    width=item.width or src.width,
                    height=item.height or src.height,
                    source_path=item.decoded_path,
                    variant=(run.profile_name, q),
                )
            )
            provenance.append(
                {
                    "image_id": f"{item.image_id}_qp{qstr}",
                    "source_image_id": item.image_id,
                    "codec": run.profile_name,
                    "quality_param": q,
                    "bitstream_bytes": item.bitstream_bytes,
                    "input_sha256": item.input_sha256,
                }
            )

    if iterations is None:
        iterations = DEFAULT_AUGMENT_ITERATIONS.get(detector)
        if iterations is None:
            raise DataError(
                f"no default iteration count for detector {detector!r}; pass iterations"
            )
    phase = TrainingPhase(label="mixed", selector="all", iterations=iterations, order=0)
    return DatasetManifest(
        name=name,
        class_table=class_table or ClassTable.default(),
        images=tuple(images),
        phases=(phase,),
        provenance=tuple(provenance),
        sampling_policy="uniform",
    )


def build_finetune_schedule(
    detector: str = "faster_rcnn",
    pristine_iters: int | None = None,
    finetune_iters: int | None = None,
    compressed_selector: str = "compressed_all",
    hyperparameters: Mapping[str, object] | None = None,
) -> TrainingSchedule:
    """Two-phase schedule: pristine pre-training, then compressed-only tuning.

    Phase 2 draws from every compressed quality level. Defaults are 25,000 then
    10,000 iterations for faster_rcnn and 24,000 then 10,000 for mask_rcnn.
    """
    if pristine_iters is None:
        pristine_iters = DEFAULT_PRETRAIN_ITERATIONS.get(detector)
        if pristine_iters is None:
            raise DataError(f"no default pre-training length for detector {detector!r}")
    if finetune_iters is None:
        finetune_iters = DEFAULT_FINETUNE_ITERATIONS
    if pristine_iters <= 0 or finetune_iters <= 0:
        raise DataError("both iteration counts must be positive")
    if not compressed_selector:
        raise DataError("the compressed-phase selector must not be empty")

    return TrainingSchedule(
        detector=detector,
        phases=(
            TrainingPhase(label="pristine", selector="pristine", iterations=pristine_iters, order=0),
            TrainingPhase(
                label="compressed", selector=compressed_selector, iterations=finetune_iters, order=1
            ),
        ),
        hyperparameters=hyperparameters
        if hyperparameters is not None
        else _default_hyperparameters(detector),
    )
