"""Box and mask geometry: IoU, run-length encoded masks, polygon rasterization.

Masks are stored run-length encoded in column-major order with the first
run counting zeros, the convention used by the common instance-segmentation
interchange tooling. All operations here are pure and safe to call from
worker threads.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError

Bbox = Sequence[float]  # (x, y, w, h), top-left origin, pixel units


class GeometryWarning(UserWarning):
    """Raised for recoverable geometry issues such as degenerate polygons."""


@dataclass(frozen=True)
class RleMask:
    """Binary mask as column-major run lengths, first run counting zeros."""

    width: int
    height: int
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise DataError(f"mask extent must be positive, got {self.width}x{self.height}")
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 0 for c in counts):
            raise DataError("run lengths must be non-negative")
        total = sum(counts)
        if total != self.width * self.height:
            raise DataError(
                f"run lengths sum to {total}, expected width*height = {self.width * self.height}"
            )
        for i in range(1, len(counts) - 1):
            if counts[i] == 0 and counts[i + 1] == 0:
                raise DataError("consecutive zero-length runs are not allowed")

    def area(self) -> int:
        """Number of set pixels."""
        return sum(length for value, length in _runs_with_values(self.counts) if value)

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj: dict) -> "RleMask":
        try:
            h, w = obj["size"]
            counts = obj["counts"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed RLE object: {obj!r}") from exc
        return cls(width=int(w), height=int(h), counts=tuple(int(c) for c in counts))


def _runs_with_values(counts: Sequence[int]):
    value = 0
    for length in counts:
        yield value, length
        value = 1 - value


def _one_intervals(mask: RleMask) -> list[tuple[int, int]]:
    """Half-open [start, end) intervals of set pixels in flat column-major order."""
    intervals = []
    pos = 0
    for value, length in _runs_with_values(mask.counts):
        if value and length:
            intervals.append((pos, pos + length))
        pos += length
    return intervals


def rle_encode(bitmask: np.ndarray) -> RleMask:
    """Encode a (height, width) binary array; decode(encode(m)) is bit-exact."""
    arr = np.asarray(bitmask)
    if arr.ndim != 2 or arr.shape[0] <= 0 or arr.shape[1] <= 0:
        raise DataError(f"bitmask must be a non-empty 2-d array, got shape {arr.shape}")
    h, w = arr.shape
    flat = (arr != 0).flatten(order="F")
    # change points delimit runs; prepend a zero-length run when the mask starts set
    change = np.flatnonzero(np.diff(flat.astype(np.int8)))
    edges = np.concatenate(([0], change + 1, [flat.size]))
    counts = np.diff(edges)
    if flat[0]:
        counts = np.concatenate(([0], counts))
    return RleMask(width=w, height=h, counts=tuple(int(c) for c in counts))


def rle_decode(mask: RleMask) -> np.ndarray:
    """Decode to a (height, width) boolean array."""
    values = np.zeros(len(mask.counts), dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, np.asarray(mask.counts, dtype=np.int64))
    return flat.reshape((mask.height, mask.width), order="F")


def bbox_iou(a: Bbox, b: Bbox) -> float:
    """Intersection over union of two (x, y, w, h) boxes; 0 when the union is empty."""
    inter = bbox_intersection_area(a, b)
    union = a[2] * a[3] + b[2] * b[3] - inter
    if union <= 0:
        return 0.0
    return inter / union


def bbox_intersection_area(a: Bbox, b: Bbox) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw < 0 or ah < 0 or bw < 0 or bh < 0:
        raise DataError("box width and height must be non-negative")
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    return ix * iy


def mask_intersection_area(a: RleMask, b: RleMask) -> int:
    """Set-pixel overlap count, computed on runs without decoding."""
    _check_extents(a, b)
    ia, ib = _one_intervals(a), _one_intervals(b)
    inter = 0
    i = j = 0
    while i < len(ia) and j < len(ib):
        lo = max(ia[i][0], ib[j][0])
        hi = min(ia[i][1], ib[j][1])
        if hi > lo:
            inter += hi - lo
        if ia[i][1] <= ib[j][1]:
            i += 1
        else:
            j += 1
    return inter


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection over union of two masks of equal extent, on runs."""
    inter = mask_intersection_area(a, b)
    union = a.area() + b.area() - inter
    if union <= 0:
        return 0.0
    return inter / union


def _check_extents(a: RleMask, b: RleMask) -> None:
    if (a.width, a.height) != (b.width, b.height):
        raise DataError(
            f"mask extents differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def rasterize_polygon(vertices: Sequence[Sequence[float]], width: int, height: int) -> RleMask:
    """Fill a polygon onto a width x height raster.

    Even-odd scanline fill with the pixel-center rule: a pixel is set iff its
    center lies inside the polygon. The vertex list is treated as a closed
    loop. A degenerate polygon (fewer than 3 vertices or zero signed area)
    yields an empty mask and a GeometryWarning.
    """
    if width <= 0 or height <= 0:
        raise DataError(f"raster extent must be positive, got {width}x{height}")
    verts = [(float(x), float(y)) for x, y in vertices]
    if len(verts) < 3 or _shoelace_area(verts) == 0.0:
        warnings.warn("degenerate polygon rasterizes to an empty mask", GeometryWarning)
        return RleMask(width=width, height=height, counts=(width * height,))

    grid = np.zeros((height, width), dtype=bool)
    edges = list(zip(verts, verts[1:] + verts[:1]))
    for row in range(height):
        py = row + 0.5
        crossings = []
        for (x1, y1), (x2, y2) in edges:
            if (y1 <= py < y2) or (y2 <= py < y1):
                crossings.append(x1 + (py - y1) * (x2 - x1) / (y2 - y1))
        crossings.sort()
        for k in range(0, len(crossings) - 1, 2):
            xa, xb = crossings[k], crossings[k + 1]
            # pixel centers c + 0.5 with xa <= c + 0.5 < xb
            c0 = max(0, int(np.ceil(xa - 0.5)))
            c1 = min(width, int(np.ceil(xb - 0.5)))
            if c1 > c0:
                grid[row, c0:c1] = True
    return rle_encode(grid)


def polygon_bounds(vertices: Sequence[Sequence[float]]) -> tuple[float, float, float, float]:
    """Axis-aligned (x, y, w, h) bounding box of a vertex list."""
    xs = [float(x) for x, _ in vertices]
    ys = [float(y) for _, y in vertices]
    if not xs:
        raise DataError("empty vertex list")
    return min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys)


def _shoelace_area(verts: list[tuple[float, float]]) -> float:
    total = 0.0
    for (x1, y1), (x2, y2) in zip(verts, verts[1:] + verts[:1]):
        total += x1 * y2 - x2 * y1
    return abs(total) / 2.0
