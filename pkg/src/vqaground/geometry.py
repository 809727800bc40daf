"""Geometric primitives: boxes, polygons, binary masks and the operations on them.

Rasterization follows a pixel-center, half-open convention: pixel (col, row) is
covered by a box iff its center (col + 0.5, row + 0.5) satisfies
x_min <= cx < x_max and y_min <= cy < y_max.  Under this rule the pixel count
of a rasterized integer box equals its continuous area, which is what the
oracle tests rely on.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegeneratePolygonWarning, ShapeMismatch


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, origin top-left, y downward."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if any(c < 0 for c in coords):
            raise ValueError(f"negative box coordinates: {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box must have positive area: {coords}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def intersection_area(self, other: "BBox") -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def clip(self, width: float, height: float) -> "BBox | None":
        """Clip to [0, width] x [0, height]; None when nothing remains."""
        x0 = max(0.0, min(self.x_min, width))
        y0 = max(0.0, min(self.y_min, height))
        x1 = max(0.0, min(self.x_max, width))
        y1 = max(0.0, min(self.y_max, height))
        if x0 >= x1 or y0 >= y1:
            return None
        return BBox(x0, y0, x1, y1)

    def to_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, v) -> "BBox":
        if len(v) != 4:
            raise ValueError(f"box needs 4 coordinates, got {len(v)}")
        return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]))

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))


@dataclass(frozen=True)
class Polygon:
    """Implicitly closed polygon; at least 3 vertices."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise ValueError(f"polygon needs >= 3 vertices, got {len(verts)}")
        for x, y in verts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"non-finite vertex ({x}, {y})")
        object.__setattr__(self, "vertices", verts)

    def is_degenerate(self) -> bool:
        """True when every vertex lies on one line (zero enclosed area)."""
        v = np.asarray(self.vertices, dtype=float)
        a = v[0]
        # reference direction from the first vertex distinct from v[0]
        deltas = v - a
        nonzero = np.flatnonzero(np.abs(deltas).sum(axis=1) > 1e-12)
        if nonzero.size == 0:
            return True  # all vertices coincide
        d = deltas[nonzero[0]]
        cross = d[0] * deltas[:, 1] - d[1] * deltas[:, 0]
        return bool(np.all(np.abs(cross) < 1e-12))

    def to_list(self) -> list[list[float]]:
        return [[x, y] for x, y in self.vertices]

    @classmethod
    def from_list(cls, pts) -> "Polygon":
        return cls(tuple((float(p[0]), float(p[1])) for p in pts))


@dataclass
class BinaryMask:
    """Row-major boolean grid; data has shape (height, width)."""

    width: int
    height: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"mask must be at least 1x1, got {self.width}x{self.height}")
        arr = np.asarray(self.data, dtype=bool)
        if arr.shape != (self.height, self.width):
            raise ValueError(f"data shape {arr.shape} != ({self.height}, {self.width})")
        self.data = arr

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(width, height, np.zeros((height, width), dtype=bool))

    @property
    def count(self) -> int:
        return int(self.data.sum())


@dataclass
class AttentionMap:
    """Non-negative activation grid, same layout as BinaryMask."""

    width: int
    height: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != (self.height, self.width):
            raise ValueError(f"values shape {arr.shape} != ({self.height}, {self.width})")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("attention values must be finite and >= 0")
        self.values = arr


@dataclass(frozen=True)
class Component:
    """One connected region: its pixel count and tight half-open integer box."""

    pixel_count: int
    bbox: BBox


def iou_bbox(a: BBox, b: BBox) -> float:
    """Intersection area over union area of two boxes."""
    inter = a.intersection_area(b)
    if inter <= 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def overlap_ratio(pred: BBox, gt: BBox) -> float:
    """Intersection area over ground-truth area (asymmetric)."""
    return pred.intersection_area(gt) / gt.area


def rasterize_boxes(boxes: list[BBox], width: int, height: int) -> BinaryMask:
    """Union of boxes sampled at pixel centers; boxes are clipped to the image."""
    if width < 1 or height < 1:
        raise ValueError(f"image must be at least 1x1, got {width}x{height}")
    out = np.zeros((height, width), dtype=bool)
    cx = np.arange(width) + 0.5
    cy = np.arange(height) + 0.5
    for box in boxes:
        clipped = box.clip(width, height)
        if clipped is None:
            continue
        col = (cx >= clipped.x_min) & (cx < clipped.x_max)
        row = (cy >= clipped.y_min) & (cy < clipped.y_max)
        out |= row[:, None] & col[None, :]
    return BinaryMask(width, height, out)


_EDGE_EPS = 1e-9


def fill_polygon(poly: Polygon, width: int, height: int) -> BinaryMask:
    """Even-odd fill sampled at pixel centers, clipped to the image.

    A center lying exactly on a polygon edge counts as inside.  A fully
    degenerate (collinear) polygon produces an all-false mask and a
    DegeneratePolygonWarning instead of an error.
    """
    if width < 1 or height < 1:
        raise ValueError(f"image must be at least 1x1, got {width}x{height}")
    if poly.is_degenerate():
        warnings.warn("polygon vertices are collinear", DegeneratePolygonWarning)
        return BinaryMask.empty(width, height)

    cx = np.arange(width) + 0.5
    cy = np.arange(height) + 0.5
    X = np.broadcast_to(cx[None, :], (height, width))
    Y = np.broadcast_to(cy[:, None], (height, width))
    inside = np.zeros((height, width), dtype=bool)
    on_edge = np.zeros((height, width), dtype=bool)
    verts = poly.vertices
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        crosses = (y1 > Y) != (y2 > Y)
        if crosses.any():
            # safe where crosses is True, since then y2 != y1
            denom = y2 - y1 if y2 != y1 else 1.0
            x_int = (x2 - x1) * (Y - y1) / denom + x1
            inside ^= crosses & (X < x_int)
        cross = (x2 - x1) * (Y - y1) - (y2 - y1) * (X - x1)
        within = (
            (X >= min(x1, x2) - _EDGE_EPS) & (X <= max(x1, x2) + _EDGE_EPS)
            & (Y >= min(y1, y2) - _EDGE_EPS) & (Y <= max(y1, y2) + _EDGE_EPS)
        )
        on_edge |= (np.abs(cross) <= _EDGE_EPS) & within
    return BinaryMask(width, height, inside | on_edge)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """Pixel-count IoU of two same-size masks; empty vs empty counts as 1.0."""
    if (a.width, a.height) != (b.width, b.height):
        raise ShapeMismatch(
            f"mask sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    union = int((a.data | b.data).sum())
    if union == 0:
        return 1.0
    inter = int((a.data & b.data).sum())
    return inter / union


_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCT_8 = np.ones((3, 3), dtype=bool)


def connected_components(mask: BinaryMask, connectivity: int = 8) -> list[Component]:
    """Label maximal connected regions of set pixels.

    Components come back sorted by descending pixel count, ties broken by the
    (y_min, x_min) corner of their tight boxes.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    struct = _STRUCT_4 if connectivity == 4 else _STRUCT_8
    labels, n = ndimage.label(mask.data, structure=struct)
    if n == 0:
        return []
    counts = np.bincount(labels.ravel())[1:]
    comps = []
    for i, sl in enumerate(ndimage.find_objects(labels)):
        rows, cols = sl
        box = BBox(float(cols.start), float(rows.start), float(cols.stop), float(rows.stop))
        comps.append(Component(int(counts[i]), box))
    comps.sort(key=lambda c: (-c.pixel_count, c.bbox.y_min, c.bbox.x_min))
    return comps


def attention_map_to_boxes(
    amap: AttentionMap, bin_threshold: float = 0.5, min_area: int = 4
) -> list[BBox]:
    """Convert an activation map to boxes: binarize at a fraction of the max,
    label 8-connected regions, and keep the tight boxes of regions with at
    least min_area pixels.  An all-zero map yields no boxes.
    """
    if not 0 < bin_threshold <= 1:
        raise ValueError(f"bin_threshold must be in (0, 1], got {bin_threshold}")
    peak = float(amap.values.max())
    if peak == 0.0:
        return []
    binary = BinaryMask(amap.width, amap.height, amap.values >= bin_threshold * peak)
    comps = connected_components(binary, connectivity=8)
    return [c.bbox for c in comps if c.pixel_count >= min_area]
