"""Canonical types and parsers for ground truth, detections, and dataset manifests.

The interchange formats are JSON:

* ground truth: ``{"images": [...], "annotations": [...], "categories": [...]}``
* detections:   ``[{"image_id", "category_id", "bbox", "score", "segmentation"?}, ...]``
* manifest:     versioned document with a ``schema_version`` field

See ``docs/schemas.md`` for the full field-by-field description with examples.
Parsed sets are immutable after construction and safe to share across threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import ParseError
from .geometry import RleMask, polygon_bounds, rasterize_polygon

MANIFEST_SCHEMA_VERSION = 1

# Cityscapes road-user instance classes in their conventional order.
DEFAULT_CLASS_NAMES = (
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
)


@dataclass(frozen=True)
class ClassTable:
    """Ordered (class_id, name) pairs with contiguous ids starting at 0."""

    entries: tuple[tuple[int, str], ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ParseError("class table must not be empty")
        ids = [cid for cid, _ in self.entries]
        names = [name for _, name in self.entries]
        if ids != list(range(len(ids))):
            raise ParseError(f"class ids must be contiguous from 0, got {ids}")
        if len(set(names)) != len(names):
            raise ParseError("class names must be unique")

    @classmethod
    def default(cls) -> "ClassTable":
        return cls(tuple(enumerate(DEFAULT_CLASS_NAMES)))

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "ClassTable":
        return cls(tuple(enumerate(names)))

    def id_of(self, name: str) -> int:
        for cid, cname in self.entries:
            if cname == name:
                return cid
        raise KeyError(name)

    def name_of(self, class_id: int) -> str:
        for cid, cname in self.entries:
            if cid == class_id:
                return cname
        raise KeyError(class_id)

    def __contains__(self, class_id: int) -> bool:
        return 0 <= class_id < len(self.entries)

    def ids(self) -> tuple[int, ...]:
        return tuple(cid for cid, _ in self.entries)

    def to_json(self) -> list[dict]:
        return [{"id": cid, "name": name} for cid, name in self.entries]

    @classmethod
    def from_json(cls, obj: Iterable[Mapping]) -> "ClassTable":
        pairs = sorted((int(c["id"]), str(c["name"])) for c in obj)
        return cls(tuple(pairs))


PRISTINE = "pristine"


@dataclass(frozen=True)
class ImageRecord:
    """Identity of one image, either pristine or a compressed variant of one."""

    image_id: str
    width: int
    height: int
    source_path: str = ""
    variant: str | tuple[str, object] = PRISTINE  # "pristine" or (codec_name, quality_param)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ParseError(
                f"image {self.image_id!r}: dimensions must be positive, "
                f"got {self.width}x{self.height}"
            )

    @property
    def is_pristine(self) -> bool:
        return self.variant == PRISTINE

    def to_json(self) -> dict:
        variant = (
            PRISTINE
            if self.is_pristine
            else {"codec": self.variant[0], "quality_param": self.variant[1]}
        )
        return {
            "image_id": self.image_id,
            "width": self.width,
            "height": self.height,
            "source_path": self.source_path,
            "variant": variant,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ImageRecord":
        variant = obj.get("variant", PRISTINE)
        if isinstance(variant, Mapping):
            variant = (str(variant["codec"]), variant["quality_param"])
        return cls(
            image_id=str(obj["image_id"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
            source_path=str(obj.get("source_path", "")),
            variant=variant,
        )


class _LazyMask:
    """Defers polygon rasterization until the mask is first needed."""

    __slots__ = ("_polygons", "_width", "_height", "_mask")

    def __init__(self, polygons, width, height, mask=None):
        self._polygons = polygons
        self._width = width
        self._height = height
        self._mask = mask

    def get(self) -> RleMask:
        if self._mask is None:
            self._mask = rasterize_polygons(self._polygons, self._width, self._height)
        return self._mask


def rasterize_polygons(polygons: Sequence[Sequence[Sequence[float]]], width: int, height: int) -> RleMask:
    """Union of one or more polygon rings, each filled with the even-odd rule."""
    import numpy as np

    from .geometry import rle_decode, rle_encode

    combined = np.zeros((height, width), dtype=bool)
    for ring in polygons:
        combined |= rle_decode(rasterize_polygon(ring, width, height))
    return rle_encode(combined)


@dataclass(frozen=True)
class GtInstance:
    """One labeled ground-truth object."""

    image_id: str
    class_id: int
    bbox: tuple[float, float, float, float]
    ignore: bool = False
    _mask_source: _LazyMask | None = field(default=None, repr=False, compare=False)

    @property
    def has_mask(self) -> bool:
        return self._mask_source is not None

    def mask(self) -> RleMask | None:
        """Rasterized mask, or None when the annotation is box-only."""
        if self._mask_source is None:
            return None
        return self._mask_source.get()


@dataclass(frozen=True)
class Detection:
    """One detector output."""

    image_id: str
    class_id: int
    bbox: tuple[float, float, float, float]
    score: float
    mask: RleMask | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ParseError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruthSet:
    """Validated ground truth: images, instances, and parse warnings."""

    class_table: ClassTable
    images: tuple[ImageRecord, ...]
    instances: tuple[GtInstance, ...]
    warnings: tuple[str, ...] = ()

    def image_by_id(self) -> dict[str, ImageRecord]:
        return {rec.image_id: rec for rec in self.images}

    def instances_by_image(self) -> dict[str, list[GtInstance]]:
        grouped: dict[str, list[GtInstance]] = {rec.image_id: [] for rec in self.images}
        for inst in self.instances:
            grouped.setdefault(inst.image_id, []).append(inst)
        return grouped

    def counts_per_class(self, include_ignored: bool = False) -> dict[int, int]:
        counts: dict[int, int] = {}
        for inst in self.instances:
            if inst.ignore and not include_ignored:
                continue
            counts[inst.class_id] = counts.get(inst.class_id, 0) + 1
        return counts

    def image_presence_per_class(self) -> dict[int, int]:
        """Number of images in which each class has at least one kept instance."""
        seen: dict[int, set[str]] = {}
        for inst in self.instances:
            if inst.ignore:
                continue
            seen.setdefault(inst.class_id, set()).add(inst.image_id)
        return {cid: len(ids) for cid, ids in seen.items()}


@dataclass(frozen=True)
class DetectionSet:
    """Detections in stable input order; the order breaks score ties downstream."""

    detections: tuple[Detection, ...]

    def by_image(self) -> dict[str, list[tuple[int, Detection]]]:
        """Groups of (input_position, detection) per image, order preserved."""
        grouped: dict[str, list[tuple[int, Detection]]] = {}
        for pos, det in enumerate(self.detections):
            grouped.setdefault(det.image_id, []).append((pos, det))
        return grouped


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _load_json(data: bytes | str, what: str):
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{what}: not valid JSON: {exc}") from exc


def _parse_bbox(raw, *, context: str) -> tuple[float, float, float, float]:
    try:
        x, y, w, h = (float(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{context}: bbox must be [x, y, w, h], got {raw!r}") from exc
    if w < 0 or h < 0:
        raise ParseError(f"{context}: bbox width/height must be non-negative, got {raw!r}")
    return (x, y, w, h)


def _parse_polygons(seg, *, context: str) -> list[list[tuple[float, float]]]:
    """Accepts one flat ring [x1,y1,...] or a list of flat rings."""
    if not isinstance(seg, list) or not seg:
        raise ParseError(f"{context}: polygon segmentation must be a non-empty list")
    rings = seg if isinstance(seg[0], list) else [seg]
    out = []
    for ring in rings:
        if len(ring) < 6 or len(ring) % 2 != 0:
            raise ParseError(f"{context}: polygon ring needs >= 3 (x, y) pairs")
        out.append([(float(ring[i]), float(ring[i + 1])) for i in range(0, len(ring), 2)])
    return out


def parse_ground_truth(data: bytes | str, class_table: ClassTable | None = None) -> GroundTruthSet:
    """Parse the ground-truth JSON document.

    Annotations may name their class by id or by name; unknown classes are
    rejected with the offending record's position. Boxes extending past the
    image are clamped and reported in the returned set's ``warnings``.
    Polygon segmentations are rasterized lazily, on first mask access.
    """
    doc = _load_json(data, "ground truth")
    if not isinstance(doc, Mapping):
        raise ParseError("ground truth: top level must be an object")

    if class_table is None:
        cats = doc.get("categories")
        class_table = ClassTable.from_json(cats) if cats else ClassTable.default()

    images = []
    for i, img in enumerate(doc.get("images", [])):
        try:
            images.append(
                ImageRecord(
                    image_id=str(img["id"]), width=int(img["width"]), height=int(img["height"])
                )
            )
        except KeyError as exc:
            raise ParseError(f"images[{i}]: missing field {exc}") from exc
    by_id = {rec.image_id: rec for rec in images}
    if len(by_id) != len(images):
        raise ParseError("duplicate image ids in ground truth")

    instances = []
    warnings_log: list[str] = []
    for i, ann in enumerate(doc.get("annotations", [])):
        context = f"annotations[{i}]"
        image_id = str(ann.get("image_id", ""))
        if image_id not in by_id:
            raise ParseError(f"{context}: unknown image_id {image_id!r}")
        rec = by_id[image_id]

        cat = ann.get("category", ann.get("category_id"))
        if isinstance(cat, str):
            try:
                class_id = class_table.id_of(cat)
            except KeyError:
                raise ParseError(f"{context}: unknown class {cat!r}") from None
        elif isinstance(cat, int) and not isinstance(cat, bool):
            if cat not in class_table:
                raise ParseError(f"{context}: unknown class id {cat}")
            class_id = cat
        else:
            raise ParseError(f"{context}: missing or malformed category")

        seg = ann.get("segmentation")
        mask_source = None
        if seg is not None:
            if isinstance(seg, Mapping):
                rle = RleMask.from_json(seg)
                if (rle.width, rle.height) != (rec.width, rec.height):
                    raise ParseError(
                        f"{context}: mask extent {rle.width}x{rle.height} does not match "
                        f"image extent {rec.width}x{rec.height}"
                    )
                mask_source = _LazyMask(None, rec.width, rec.height, mask=rle)
            else:
                polygons = _parse_polygons(seg, context=context)
                mask_source = _LazyMask(polygons, rec.width, rec.height)

        raw_bbox = ann.get("bbox")
        if raw_bbox is None:
            if seg is None or isinstance(seg, Mapping):
                raise ParseError(f"{context}: bbox required when no polygon is given")
            polys = _parse_polygons(seg, context=context)
            raw_bbox = polygon_bounds([pt for ring in polys for pt in ring])
        bbox = _parse_bbox(raw_bbox, context=context)
        clamped = _clamp_bbox(bbox, rec.width, rec.height)
        if clamped is None:
            raise ParseError(
                f"{context}: bbox {bbox} leaves no 1x1-pixel extent inside the "
                f"{rec.width}x{rec.height} image"
            )
        if clamped != bbox:
            warnings_log.append(f"{context}: bbox {bbox} clamped to image bounds {clamped}")
            bbox = clamped

        instances.append(
            GtInstance(
                image_id=image_id,
                class_id=class_id,
                bbox=bbox,
                ignore=bool(ann.get("ignore", False)),
                _mask_source=mask_source,
            )
        )

    return GroundTruthSet(
        class_table=class_table,
        images=tuple(images),
        instances=tuple(instances),
        warnings=tuple(warnings_log),
    )


def _clamp_bbox(bbox, width, height):
    x, y, w, h = bbox
    x0, y0 = max(x, 0.0), max(y, 0.0)
    x1, y1 = min(x + w, float(width)), min(y + h, float(height))
    if x1 - x0 < 1.0 or y1 - y0 < 1.0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def parse_detections(data: bytes | str, class_table: ClassTable | None = None) -> DetectionSet:
    """Parse the detections JSON array, preserving input order."""
    doc = _load_json(data, "detections")
    if not isinstance(doc, list):
        raise ParseError("detections: top level must be an array")

    detections = []
    for i, rec in enumerate(doc):
        context = f"detections[{i}]"
        if "image_id" not in rec:
            raise ParseError(f"{context}: missing image_id")
        score = rec.get("score")
        if not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
            raise ParseError(f"{context}: score {score!r} outside [0, 1]")
        class_id = rec.get("category_id")
        if not isinstance(class_id, int) or isinstance(class_id, bool):
            raise ParseError(f"{context}: category_id must be an integer")
        if class_table is not None and class_id not in class_table:
            raise ParseError(f"{context}: unknown class id {class_id}")
        mask = None
        if rec.get("segmentation") is not None:
            mask = RleMask.from_json(rec["segmentation"])
        detections.append(
            Detection(
                image_id=str(rec["image_id"]),
                class_id=class_id,
                bbox=_parse_bbox(rec["bbox"], context=context),
                score=float(score),
                mask=mask,
            )
        )
    return DetectionSet(detections=tuple(detections))


# ---------------------------------------------------------------------------
# Serialization (round-trips with the parsers above)
# ---------------------------------------------------------------------------


def serialize_ground_truth(gt: GroundTruthSet) -> str:
    doc = {
        "images": [
            {"id": rec.image_id, "width": rec.width, "height": rec.height} for rec in gt.images
        ],
        "annotations": [
            {
                "image_id": inst.image_id,
                "category": gt.class_table.name_of(inst.class_id),
                "bbox": list(inst.bbox),
                "segmentation": inst.mask().to_json() if inst.has_mask else None,
                "ignore": inst.ignore,
            }
            for inst in gt.instances
        ],
        "categories": gt.class_table.to_json(),
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def serialize_detections(dets: DetectionSet) -> str:
    doc = [
        {
            "image_id": det.image_id,
            "category_id": det.class_id,
            "bbox": list(det.bbox),
            "score": det.score,
            "segmentation": det.mask.to_json() if det.mask is not None else None,
        }
        for det in dets.detections
    ]
    return json.dumps(doc, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# Dataset manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetManifest:
    """Pristine images, their compressed variants, and the training phases."""

    name: str
    class_table: ClassTable
    images: tuple[ImageRecord, ...]
    phases: tuple = ()  # TrainingPhase entries, see the augmentation module
    provenance: tuple[Mapping, ...] = ()
    sampling_policy: str = "uniform"

    def pristine_images(self) -> list[ImageRecord]:
        return [rec for rec in self.images if rec.is_pristine]

    def variants(self) -> dict[tuple[str, object], list[ImageRecord]]:
        out: dict[tuple[str, object], list[ImageRecord]] = {}
        for rec in self.images:
            if not rec.is_pristine:
                out.setdefault(rec.variant, []).append(rec)
        return out

    def to_json(self) -> str:
        from .augmentation import TrainingPhase  # local import to avoid a cycle

        doc = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "name": self.name,
            "class_table": self.class_table.to_json(),
            "images": [rec.to_json() for rec in self.images],
            "phases": [
                p.to_json() if isinstance(p, TrainingPhase) else dict(p) for p in self.phases
            ],
            "sampling_policy": self.sampling_policy,
            "provenance": [dict(p) for p in self.provenance],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, data: bytes | str) -> "DatasetManifest":
        from .augmentation import TrainingPhase

        doc = _load_json(data, "manifest")
        version = doc.get("schema_version")
        if version != MANIFEST_SCHEMA_VERSION:
            raise ParseError(f"unsupported manifest schema_version {version!r}")
        return cls(
            name=str(doc["name"]),
            class_table=ClassTable.from_json(doc["class_table"]),
            images=tuple(ImageRecord.from_json(rec) for rec in doc["images"]),
            phases=tuple(TrainingPhase.from_json(p) for p in doc.get("phases", [])),
            provenance=tuple(doc.get("provenance", [])),
            sampling_policy=str(doc.get("sampling_policy", "uniform")),
        )


def variant_stem(image_id: str) -> str:
    """Pristine id a compressed record points back to; compressed ids end in _qp<q>."""
    if "_qp" in image_id:
        return image_id.rsplit("_qp", 1)[0]
    return image_id


@dataclass(frozen=True)
class ValidationReport:
    """Diagnostics from validate_manifest; empty iff the manifest is consistent."""

    violations: tuple[tuple[str, str], ...]  # (kind, message)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {kind for kind, _ in self.violations}


def validate_manifest(manifest: DatasetManifest) -> ValidationReport:
    """Check the equal-count invariant, stem references, and id uniqueness."""
    violations: list[tuple[str, str]] = []

    seen: set[str] = set()
    for rec in manifest.images:
        if rec.image_id in seen:
            violations.append(("duplicate_id", f"image id {rec.image_id!r} appears twice"))
        seen.add(rec.image_id)

    pristine_ids = {rec.image_id for rec in manifest.pristine_images()}
    for rec in manifest.images:
        if rec.is_pristine:
            continue
        if variant_stem(rec.image_id) not in pristine_ids:
            violations.append(
                ("dangling_reference", f"compressed image {rec.image_id!r} matches no pristine image")
            )

    n_pristine = len(pristine_ids)
    for variant, records in sorted(manifest.variants().items(), key=lambda kv: repr(kv[0])):
        if len(records) != n_pristine:
            violations.append(
                (
                    "unequal_variant_count",
                    f"variant {variant!r} has {len(records)} images, expected {n_pristine}",
                )
            )

    return ValidationReport(violations=tuple(violations))


# ---------------------------------------------------------------------------
# Cityscapes polygon-file converter
# ---------------------------------------------------------------------------


def convert_cityscapes_polygons(
    files: Mapping[str, bytes | str], class_table: ClassTable | None = None
) -> GroundTruthSet:
    """Convert native per-image polygon files into the canonical ground truth.

    ``files`` maps image ids to the polygon JSON of that image. Labels ending
    in ``group`` become ignore regions of the base class; labels outside the
    class table (road, sky, ...) are skipped.
    """
    table = class_table or ClassTable.default()
    images = []
    annotations = []
    for image_id in sorted(files):
        doc = _load_json(files[image_id], f"cityscapes polygons for {image_id!r}")
        width, height = int(doc["imgWidth"]), int(doc["imgHeight"])
        images.append({"id": image_id, "width": width, "height": height})
        for obj in doc.get("objects", []):
            label = str(obj["label"])
            ignore = False
            if label.endswith("group"):
                label = label[: -len("group")]
                ignore = True
            try:
                table.id_of(label)
            except KeyError:
                continue
            flat = [coord for point in obj["polygon"] for coord in point]
            annotations.append(
                {
                    "image_id": image_id,
                    "category": label,
                    "segmentation": flat,
                    "ignore": ignore,
                }
            )
    doc = {"images": images, "annotations": annotations, "categories": table.to_json()}
    return parse_ground_truth(json.dumps(doc), class_table=table)
