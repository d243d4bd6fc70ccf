"""Axis-aligned box and keypoint arithmetic.

Boxes are continuous (sub-pixel) throughout the pipeline; rounding to
integer pixels happens only at raster extraction and serialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

VISIBILITY_NONE = 0      # not labeled
VISIBILITY_OCCLUDED = 1  # labeled but not visible
VISIBILITY_VISIBLE = 2   # labeled and visible


class Keypoint(NamedTuple):
    x: float
    y: float
    v: int


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box: top-left corner plus positive width/height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"degenerate box {self.w} x {self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def contains_point(self, x: float, y: float) -> bool:
        """Closed-bounds containment test."""
        return self.x <= x <= self.x2 and self.y <= y <= self.y2

    def intersects(self, other: "BBox") -> bool:
        """True when the shared region has strictly positive area."""
        iw = min(self.x2, other.x2) - max(self.x, other.x)
        ih = min(self.y2, other.y2) - max(self.y, other.y)
        return iw > 0 and ih > 0


# Crop windows use the same representation as person boxes.
Rect = BBox


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, 0 when disjoint."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # rounding in x2/y2 can push inter a hair past the union for
    # (near-)identical boxes
    return min(1.0, inter / (a.area + b.area - inter))


def intersection(a: BBox, b: BBox) -> BBox | None:
    """Intersection rectangle, or None when the overlap has no area."""
    x1 = max(a.x, b.x)
    y1 = max(a.y, b.y)
    x2 = min(a.x2, b.x2)
    y2 = min(a.y2, b.y2)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        return None
    return BBox(x1, y1, x2 - x1, y2 - y1)


def clip_box(box: BBox, crop: Rect) -> tuple[BBox | None, float]:
    """Clip ``box`` to ``crop`` in source coordinates.

    Returns the intersection rectangle (or None when disjoint) along
    with the fraction of the box area that lies inside the crop.
    """
    inter = intersection(box, crop)
    if inter is None:
        return None, 0.0
    return inter, inter.area / box.area


def person_scale(box: BBox, scene_w: float, scene_h: float) -> float:
    """Linear size of a person relative to the image that holds it.

    sqrt(box area / image area), clipped to 1.0 for boxes larger than
    the image.
    """
    scene_area = scene_w * scene_h
    return math.sqrt(min(box.area, scene_area) / scene_area)


def to_crop_coords(p: Keypoint, crop: Rect, out_w: float, out_h: float) -> Keypoint:
    """Map a scene-space keypoint into the output pixel space of a crop.

    Pure affine transform; no bounds clamping.
    """
    return Keypoint(
        (p.x - crop.x) * (out_w / crop.w),
        (p.y - crop.y) * (out_h / crop.h),
        p.v,
    )


def from_crop_coords(p: Keypoint, crop: Rect, out_w: float, out_h: float) -> Keypoint:
    """Inverse of :func:`to_crop_coords`."""
    return Keypoint(
        crop.x + p.x * (crop.w / out_w),
        crop.y + p.y * (crop.h / out_h),
        p.v,
    )


def transform_box(box: BBox, crop: Rect, out_w: float, out_h: float) -> BBox:
    """Apply the crop transform of :func:`to_crop_coords` to a box."""
    fx = out_w / crop.w
    fy = out_h / crop.h
    return BBox((box.x - crop.x) * fx, (box.y - crop.y) * fy, box.w * fx, box.h * fy)
