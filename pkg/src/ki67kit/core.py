"""Geometry primitives, IoU, confidence filtering, and greedy NMS.

Everything here is a pure function over immutable values; the rest of the
toolkit builds on these.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class CellClass(enum.IntEnum):
    """Cell classes with stable integer codes used in all serialized forms."""

    POSITIVE = 0
    NEGATIVE = 1

    def toggled(self) -> "CellClass":
        return CellClass.NEGATIVE if self is CellClass.POSITIVE else CellClass.POSITIVE


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle, origin top-left, corners as reals."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        for name in ("x_min", "y_min", "x_max", "y_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"box coordinates must be finite, got {coords}")
        if any(c < 0 for c in coords):
            raise ValueError(f"box coordinates must be >= 0, got {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"box must have positive extent, got {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    cls: CellClass
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class GroundTruth:
    box: BoundingBox
    cls: CellClass


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint, 1 when identical.

    Boxes touching only along an edge have intersection area 0 and IoU 0.
    """
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def filter_confidence(dets: list[Detection], min_conf: float) -> list[Detection]:
    """Keep detections with confidence >= min_conf, preserving order."""
    if not (0.0 <= min_conf <= 1.0):
        raise ValueError(f"min_conf must be in [0, 1], got {min_conf}")
    return [d for d in dets if d.confidence >= min_conf]


def _nms_order_key(d: Detection) -> tuple[float, float, float, int]:
    # Ties in confidence are broken by smaller x_min, then smaller y_min,
    # then class code, so suppression is reproducible.
    return (-d.confidence, d.box.x_min, d.box.y_min, int(d.cls))


def nms(
    dets: list[Detection],
    iou_threshold: float = 0.3,
    class_aware: bool = True,
) -> list[Detection]:
    """Greedy non-maximum suppression.

    Repeatedly keeps the highest-confidence remaining detection and drops
    every remaining detection whose IoU with it exceeds ``iou_threshold``.
    With ``class_aware`` (the default) only detections of the same class are
    suppressed, so overlapping positive and negative cells survive together.
    Output is sorted by descending confidence.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    remaining = sorted(dets, key=_nms_order_key)
    kept: list[Detection] = []
    while remaining:
        top = remaining.pop(0)
        kept.append(top)
        remaining = [
            d
            for d in remaining
            if (class_aware and d.cls != top.cls) or iou(d.box, top.box) <= iou_threshold
        ]
    return kept
