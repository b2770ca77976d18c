"""Parsers, serialization round trips, and manifest validation."""
import json

import pytest

from vcmbench.datamodel import (
    ClassTable,
    DatasetManifest,
    ImageRecord,
    convert_cityscapes_polygons,
    parse_detections,
    parse_ground_truth,
    serialize_detections,
    serialize_ground_truth,
    validate_manifest,
)
from vcmbench.errors import ParseError

from oracles import rasterize_by_point_test


def gt_doc(annotations, images=None, categories=True):
    doc = {
        "images": images or [{"id": "img", "width": 20, "height": 15}],
        "annotations": annotations,
    }
    if categories:
        doc["categories"] = ClassTable.default().to_json()
    return json.dumps(doc)


class TestClassTable:
    def test_default_has_eight_road_users(self):
        table = ClassTable.default()
        assert len(table.entries) == 8
        assert table.name_of(0) == "person"
        assert table.id_of("bicycle") == 7

    def test_non_contiguous_ids_rejected(self):
        with pytest.raises(ParseError):
            ClassTable(((0, "a"), (2, "b")))

    def test_duplicate_names_rejected(self):
        with pytest.raises(ParseError):
            ClassTable(((0, "a"), (1, "a")))

    def test_empty_rejected(self):
        with pytest.raises(ParseError):
            ClassTable(())


class TestParseGroundTruth:
    def test_empty_annotation_list(self):
        gt = parse_ground_truth(gt_doc([]))
        assert gt.instances == ()
        assert len(gt.images) == 1

    def test_polygon_instance_bbox_and_mask_area(self):
        verts = [(0, 0), (10, 0), (10, 10), (0, 10)]
        flat = [c for xy in verts for c in xy]
        gt = parse_ground_truth(gt_doc([{"image_id": "img", "category": "car", "segmentation": flat}]))
        (inst,) = gt.instances
        assert inst.bbox == (0.0, 0.0, 10.0, 10.0)
        mask = inst.mask()
        assert mask.area() == 100
        assert mask.area() == int(rasterize_by_point_test(verts, 20, 15).sum())

    def test_unknown_class_name(self):
        doc = gt_doc([{"image_id": "img", "category": "tree", "bbox": [0, 0, 2, 2]}])
        with pytest.raises(ParseError, match=r"annotations\[0\].*unknown class"):
            parse_ground_truth(doc)

    def test_unknown_class_id(self):
        doc = gt_doc([{"image_id": "img", "category_id": 99, "bbox": [0, 0, 2, 2]}])
        with pytest.raises(ParseError, match="unknown class id 99"):
            parse_ground_truth(doc)

    def test_bbox_clamped_with_warning(self):
        doc = gt_doc([{"image_id": "img", "category": "car", "bbox": [15, 10, 10, 10]}])
        gt = parse_ground_truth(doc)
        assert gt.instances[0].bbox == (15.0, 10.0, 5.0, 5.0)
        assert len(gt.warnings) == 1
        assert "clamped" in gt.warnings[0]

    def test_bbox_fully_outside_rejected(self):
        doc = gt_doc([{"image_id": "img", "category": "car", "bbox": [30, 30, 5, 5]}])
        with pytest.raises(ParseError, match="leaves no"):
            parse_ground_truth(doc)

    def test_rle_extent_must_match_image(self):
        seg = {"size": [4, 4], "counts": [16]}
        doc = gt_doc([{"image_id": "img", "category": "car", "bbox": [0, 0, 4, 4], "segmentation": seg}])
        with pytest.raises(ParseError, match="extent"):
            parse_ground_truth(doc)

    def test_unknown_image_rejected(self):
        doc = gt_doc([{"image_id": "ghost", "category": "car", "bbox": [0, 0, 2, 2]}])
        with pytest.raises(ParseError, match="unknown image_id"):
            parse_ground_truth(doc)

    def test_deterministic_and_order_preserving(self):
        doc = gt_doc(
            [
                {"image_id": "img", "category": "car", "bbox": [0, 0, 3, 3]},
                {"image_id": "img", "category": "person", "bbox": [5, 5, 3, 3]},
            ]
        )
        a = parse_ground_truth(doc)
        b = parse_ground_truth(doc)
        assert [i.class_id for i in a.instances] == [i.class_id for i in b.instances]
        assert a.instances[0].class_id == ClassTable.default().id_of("car")

    def test_round_trip(self):
        doc = gt_doc(
            [
                {"image_id": "img", "category": "car", "bbox": [1, 2, 3, 4], "ignore": False},
                {
                    "image_id": "img",
                    "category": "person",
                    "segmentation": [5, 5, 9, 5, 9, 9, 5, 9],
                    "ignore": True,
                },
            ]
        )
        once = parse_ground_truth(doc)
        again = parse_ground_truth(serialize_ground_truth(once))
        assert [(i.image_id, i.class_id, i.bbox, i.ignore) for i in again.instances] == [
            (i.image_id, i.class_id, i.bbox, i.ignore) for i in once.instances
        ]
        assert once.instances[1].mask() == again.instances[1].mask()
        assert again.images == once.images


class TestParseDetections:
    def test_empty(self):
        assert parse_detections("[]").detections == ()

    def test_grouping_preserves_order(self):
        doc = json.dumps(
            [
                {"image_id": "a", "category_id": 2, "bbox": [0, 0, 2, 2], "score": 0.9},
                {"image_id": "b", "category_id": 2, "bbox": [0, 0, 2, 2], "score": 0.8},
                {"image_id": "a", "category_id": 0, "bbox": [1, 1, 2, 2], "score": 0.7},
            ]
        )
        dets = parse_detections(doc)
        groups = dets.by_image()
        assert {k: len(v) for k, v in groups.items()} == {"a": 2, "b": 1}
        assert [pos for pos, _ in groups["a"]] == [0, 2]

    def test_score_out_of_range_names_index(self):
        doc = json.dumps(
            [
                {"image_id": "a", "category_id": 2, "bbox": [0, 0, 2, 2], "score": 0.9},
                {"image_id": "a", "category_id": 2, "bbox": [0, 0, 2, 2], "score": 1.5},
            ]
        )
        with pytest.raises(ParseError, match=r"detections\[1\]"):
            parse_detections(doc)

    def test_missing_image_id_rejects_file(self):
        doc = json.dumps([{"category_id": 2, "bbox": [0, 0, 2, 2], "score": 0.9}])
        with pytest.raises(ParseError, match="missing image_id"):
            parse_detections(doc)

    def test_unknown_class_checked_against_table(self):
        doc = json.dumps([{"image_id": "a", "category_id": 64, "bbox": [0, 0, 2, 2], "score": 0.5}])
        with pytest.raises(ParseError, match="unknown class id"):
            parse_detections(doc, ClassTable.default())

    def test_round_trip(self):
        doc = json.dumps(
            [
                {"image_id": "a", "category_id": 2, "bbox": [0.5, 1.5, 2.25, 2.0], "score": 0.25},
                {
                    "image_id": "b",
                    "category_id": 1,
                    "bbox": [0, 0, 4, 4],
                    "score": 1.0,
                    "segmentation": {"size": [4, 4], "counts": [0, 16]},
                },
            ]
        )
        once = parse_detections(doc)
        again = parse_detections(serialize_detections(once))
        assert again == once


def make_manifest(n_pristine=3, per_variant=None):
    pristine = [ImageRecord(image_id=f"img{i}", width=8, height=8) for i in range(n_pristine)]
    compressed = []
    for variant, ids in (per_variant or {}).items():
        for image_id in ids:
            compressed.append(
                ImageRecord(
                    image_id=f"{image_id}_qp{variant[1]}",
                    width=8,
                    height=8,
                    variant=variant,
                )
            )
    return DatasetManifest(
        name="m", class_table=ClassTable.default(), images=tuple(pristine + compressed)
    )


class TestValidateManifest:
    def test_equal_counts_valid(self):
        manifest = make_manifest(3, {("mock", 37): ["img0", "img1", "img2"]})
        assert validate_manifest(manifest).ok

    def test_unequal_counts_flagged(self):
        manifest = make_manifest(3, {("mock", 37): ["img0", "img1"]})
        report = validate_manifest(manifest)
        assert "unequal_variant_count" in report.kinds()

    def test_dangling_reference_flagged(self):
        manifest = make_manifest(3, {("mock", 37): ["img0", "img1", "ghost"]})
        report = validate_manifest(manifest)
        assert "dangling_reference" in report.kinds()

    def test_duplicate_id_flagged(self):
        records = (
            ImageRecord(image_id="img0", width=8, height=8),
            ImageRecord(image_id="img0", width=8, height=8),
        )
        manifest = DatasetManifest(name="m", class_table=ClassTable.default(), images=records)
        assert "duplicate_id" in validate_manifest(manifest).kinds()

    def test_pure(self):
        manifest = make_manifest(2, {("mock", 42): ["img0"]})
        assert validate_manifest(manifest) == validate_manifest(manifest)

    def test_manifest_json_round_trip(self):
        manifest = make_manifest(2, {("mock", 37): ["img0", "img1"]})
        again = DatasetManifest.from_json(manifest.to_json())
        assert again.images == manifest.images
        assert again.name == manifest.name
        assert again.class_table == manifest.class_table


class TestCityscapesConverter:
    def test_group_labels_become_ignore_regions(self):
        poly = {
            "imgWidth": 32,
            "imgHeight": 16,
            "objects": [
                {"label": "car", "polygon": [[0, 0], [10, 0], [10, 10], [0, 10]]},
                {"label": "cargroup", "polygon": [[12, 0], [20, 0], [20, 8], [12, 8]]},
                {"label": "road", "polygon": [[0, 0], [32, 0], [32, 16], [0, 16]]},
            ],
        }
        gt = convert_cityscapes_polygons({"frame0": json.dumps(poly)})
        assert len(gt.instances) == 2  # the road polygon is not an instance class
        regular, group = gt.instances
        assert not regular.ignore
        assert group.ignore
        assert regular.class_id == group.class_id == ClassTable.default().id_of("car")
        assert regular.mask().area() == 100
