"""Geometry: RLE round trips, IoU, and polygon rasterization against oracles."""
import numpy as np
import pytest

from vcmbench.errors import DataError
from vcmbench.geometry import (
    GeometryWarning,
    RleMask,
    bbox_iou,
    mask_intersection_area,
    mask_iou,
    rasterize_polygon,
    rle_decode,
    rle_encode,
)

from oracles import bitmap_iou, rasterize_by_point_test


class TestBboxIou:
    def test_identical_boxes(self):
        assert bbox_iou((1, 2, 3, 4), (1, 2, 3, 4)) == 1.0

    def test_disjoint_boxes(self):
        assert bbox_iou((0, 0, 1, 1), (5, 5, 1, 1)) == 0.0

    def test_half_overlapping_unit_squares(self):
        # intersection 0.5, union 1.5
        assert bbox_iou((0, 0, 1, 1), (0.5, 0, 1, 1)) == pytest.approx(1 / 3, abs=1e-15)

    def test_zero_union(self):
        assert bbox_iou((0, 0, 0, 0), (0, 0, 0, 0)) == 0.0

    def test_negative_extent_rejected(self):
        with pytest.raises(DataError):
            bbox_iou((0, 0, -1, 1), (0, 0, 1, 1))

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            a = tuple(rng.uniform(0, 10, size=4))
            b = tuple(rng.uniform(0, 10, size=4))
            iou = bbox_iou(a, b)
            assert iou == bbox_iou(b, a)
            assert 0.0 <= iou <= 1.0
        box = (1.0, 1.0, 2.0, 3.0)
        assert bbox_iou(box, box) == 1.0


class TestRle:
    def test_all_zero_mask(self):
        mask = rle_encode(np.zeros((4, 4), dtype=bool))
        assert mask.counts == (16,)

    def test_all_one_mask(self):
        mask = rle_encode(np.ones((4, 4), dtype=bool))
        assert mask.counts == (0, 16)

    def test_column_major_order(self):
        grid = np.zeros((2, 3), dtype=bool)
        grid[1, 0] = True  # second element in column-major flattening
        assert rle_encode(grid).counts == (1, 1, 4)

    def test_round_trip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            grid = rng.random((8, 8)) < rng.uniform(0.05, 0.95)
            assert np.array_equal(rle_decode(rle_encode(grid)), grid)

    def test_bad_total_rejected(self):
        with pytest.raises(DataError):
            RleMask(width=4, height=4, counts=(3, 2))

    def test_consecutive_zero_runs_rejected(self):
        with pytest.raises(DataError):
            RleMask(width=2, height=2, counts=(1, 0, 0, 3))

    def test_leading_zero_allowed(self):
        RleMask(width=2, height=2, counts=(0, 4))

    def test_json_round_trip(self):
        mask = rle_encode(np.eye(5, dtype=bool))
        again = RleMask.from_json(mask.to_json())
        assert again == mask
        assert mask.to_json()["size"] == [5, 5]


class TestMaskIou:
    def test_identical_nonempty(self):
        mask = rle_encode(np.eye(6, dtype=bool))
        assert mask_iou(mask, mask) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4), dtype=bool)
        b = np.zeros((4, 4), dtype=bool)
        a[0, 0] = True
        b[3, 3] = True
        assert mask_iou(rle_encode(a), rle_encode(b)) == 0.0

    def test_extent_mismatch(self):
        a = rle_encode(np.ones((4, 4), dtype=bool))
        b = rle_encode(np.ones((4, 5), dtype=bool))
        with pytest.raises(DataError):
            mask_iou(a, b)

    def test_matches_bitmap_oracle_exactly(self):
        rng = np.random.default_rng(23)
        for _ in range(1000):
            a = rng.random((16, 16)) < rng.uniform(0.1, 0.9)
            b = rng.random((16, 16)) < rng.uniform(0.1, 0.9)
            assert mask_iou(rle_encode(a), rle_encode(b)) == bitmap_iou(a, b)

    def test_intersection_area_on_runs(self):
        rng = np.random.default_rng(29)
        for _ in range(200):
            a = rng.random((12, 9)) < 0.5
            b = rng.random((12, 9)) < 0.5
            expected = int(np.logical_and(a, b).sum())
            assert mask_intersection_area(rle_encode(a), rle_encode(b)) == expected


class TestRasterizePolygon:
    def test_axis_aligned_rectangle(self):
        mask = rasterize_polygon([(0, 0), (10, 0), (10, 5), (0, 5)], width=12, height=8)
        assert mask.area() == 50
        grid = rle_decode(mask)
        assert grid[:5, :10].all()
        assert not grid[5:, :].any()
        assert not grid[:, 10:].any()

    def test_triangle_matches_point_oracle(self):
        verts = [(0, 0), (4, 0), (0, 4)]
        mask = rle_decode(rasterize_polygon(verts, width=6, height=6))
        assert np.array_equal(mask, rasterize_by_point_test(verts, 6, 6))

    def test_collinear_vertices_warn_empty(self):
        with pytest.warns(GeometryWarning):
            mask = rasterize_polygon([(0, 0), (2, 2), (4, 4)], width=5, height=5)
        assert mask.area() == 0

    def test_too_few_vertices_warn_empty(self):
        with pytest.warns(GeometryWarning):
            mask = rasterize_polygon([(0, 0), (3, 3)], width=4, height=4)
        assert mask.area() == 0

    def test_random_convex_polygons_match_oracle(self):
        rng = np.random.default_rng(37)
        for _ in range(200):
            n = int(rng.integers(3, 9))
            angles = np.sort(rng.uniform(0, 2 * np.pi, size=n))
            cx, cy = rng.uniform(8, 24, size=2)
            rx, ry = rng.uniform(2, 8, size=2)
            verts = [(cx + rx * np.cos(t), cy + ry * np.sin(t)) for t in angles]
            w, h = 32, 32
            produced = rle_decode(rasterize_polygon(verts, width=w, height=h))
            assert np.array_equal(produced, rasterize_by_point_test(verts, w, h))

    def test_concave_polygon_even_odd(self):
        # a plus-shape; concavity exercises multiple crossing pairs per row
        verts = [(2, 0), (4, 0), (4, 2), (6, 2), (6, 4), (4, 4), (4, 6), (2, 6), (2, 4), (0, 4), (0, 2), (2, 2)]
        produced = rle_decode(rasterize_polygon(verts, width=7, height=7))
        assert np.array_equal(produced, rasterize_by_point_test(verts, 7, 7))
