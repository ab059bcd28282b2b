"""Boundary to the external trained detector.

Predictions arrive as JSONL, one object per line, in ORIGINAL-image pixel
coordinates::

    {"image_id": str, "class_id": 0|1, "x_min": f, "y_min": f,
     "x_max": f, "y_max": f, "confidence": f}

Mapping out of the model's square input frame is the producer's job, but the
letterbox helpers here make that shim trivial and bit-exact: aspect-ratio
preserving scale to the target square, centered padding, gray fill.

The preprocessing contract assumed of the external model: images letterboxed
to 640x640, pixel values scaled to [0, 1], channels-first batched tensors.
No inference happens in this toolkit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .core import BoundingBox, CellClass, Detection, filter_confidence, nms

LETTERBOX_TARGET = 640
LETTERBOX_FILL = 114  # dominant convention of the detector family; configurable


@dataclass(frozen=True)
class RawPrediction:
    image_id: str
    box: BoundingBox
    cls: CellClass
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass
class PredictionSet:
    run_label: str
    by_image: dict[str, list[RawPrediction]] = field(default_factory=dict)
    post_nms: bool = False


@dataclass(frozen=True)
class ParseIssue:
    line_number: int
    kind: str  # "malformed" | "unknown_class" | "confidence_out_of_range" | "invalid_box"
    message: str


_REQUIRED_FIELDS = ("image_id", "class_id", "x_min", "y_min", "x_max", "y_max", "confidence")


def parse_predictions(
    lines: Iterable[str] | IO[str],
    run_label: str,
    post_nms: bool = False,
) -> tuple[PredictionSet, list[ParseIssue]]:
    """Parse prediction JSONL; bad lines become issues, good lines still load.

    Lines are independent: dropping an invalid line never changes how any
    other line parses.
    """
    pset = PredictionSet(run_label=run_label, post_nms=post_nms)
    issues: list[ParseIssue] = []
    for line_number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            issues.append(ParseIssue(line_number, "malformed", f"invalid JSON: {exc}"))
            continue
        if not isinstance(obj, dict) or any(k not in obj for k in _REQUIRED_FIELDS):
            issues.append(ParseIssue(line_number, "malformed", "missing required fields"))
            continue
        try:
            class_id = int(obj["class_id"])
        except (TypeError, ValueError):
            issues.append(ParseIssue(line_number, "malformed", f"class_id not an integer: {obj['class_id']!r}"))
            continue
        try:
            cls = CellClass(class_id)
        except ValueError:
            issues.append(ParseIssue(line_number, "unknown_class", f"class_id {class_id} not in {{0, 1}}"))
            continue
        try:
            confidence = float(obj["confidence"])
        except (TypeError, ValueError):
            issues.append(ParseIssue(line_number, "malformed", f"confidence not numeric: {obj['confidence']!r}"))
            continue
        if not (0.0 <= confidence <= 1.0):
            issues.append(
                ParseIssue(line_number, "confidence_out_of_range", f"confidence {confidence} outside [0, 1]")
            )
            continue
        try:
            box = BoundingBox(
                float(obj["x_min"]), float(obj["y_min"]), float(obj["x_max"]), float(obj["y_max"])
            )
        except (TypeError, ValueError) as exc:
            issues.append(ParseIssue(line_number, "invalid_box", str(exc)))
            continue
        prediction = RawPrediction(
            image_id=str(obj["image_id"]), box=box, cls=cls, confidence=confidence
        )
        pset.by_image.setdefault(prediction.image_id, []).append(prediction)
    return pset, issues


def load_predictions(
    path: str | Path, run_label: str | None = None, post_nms: bool = False
) -> tuple[PredictionSet, list[ParseIssue]]:
    """Load a prediction file; the run label defaults to the filename stem."""
    p = Path(path)
    label = run_label if run_label is not None else p.stem
    with p.open(encoding="utf-8") as handle:
        return parse_predictions(handle, run_label=label, post_nms=post_nms)


def postprocess(
    pset: PredictionSet, min_conf: float, nms_thresh: float = 0.3
) -> dict[str, list[Detection]]:
    """Confidence filtering plus class-aware NMS, per image.

    Sets flagged post_nms skip suppression and are only confidence-filtered.
    """
    result: dict[str, list[Detection]] = {}
    for image_id, raws in pset.by_image.items():
        dets = [Detection(box=r.box, cls=r.cls, confidence=r.confidence) for r in raws]
        dets = filter_confidence(dets, min_conf)
        if not pset.post_nms:
            dets = nms(dets, iou_threshold=nms_thresh, class_aware=True)
        result[image_id] = dets
    return result


@dataclass(frozen=True)
class LetterboxSpec:
    source_width: int
    source_height: int
    target: int
    scale: float
    pad_left: int
    pad_top: int
    fill: int = LETTERBOX_FILL


def letterbox_map(width: int, height: int, target: int = LETTERBOX_TARGET) -> LetterboxSpec:
    """Aspect-preserving mapping of a width x height image into the target square."""
    if width <= 0 or height <= 0:
        raise ValueError(f"dimensions must be positive, got {width}x{height}")
    scale = min(target / width, target / height)
    new_w = round(width * scale)
    new_h = round(height * scale)
    return LetterboxSpec(
        source_width=width,
        source_height=height,
        target=target,
        scale=scale,
        pad_left=(target - new_w) // 2,
        pad_top=(target - new_h) // 2,
    )


def letterbox_box(box: BoundingBox, spec: LetterboxSpec) -> BoundingBox:
    """Map a box from the original frame into the letterboxed square."""
    return BoundingBox(
        box.x_min * spec.scale + spec.pad_left,
        box.y_min * spec.scale + spec.pad_top,
        box.x_max * spec.scale + spec.pad_left,
        box.y_max * spec.scale + spec.pad_top,
    )


def unletterbox(box: BoundingBox, spec: LetterboxSpec) -> BoundingBox:
    """Map a box from the letterboxed square back to the original frame."""
    return BoundingBox(
        min(max((box.x_min - spec.pad_left) / spec.scale, 0.0), spec.source_width),
        min(max((box.y_min - spec.pad_top) / spec.scale, 0.0), spec.source_height),
        min(max((box.x_max - spec.pad_left) / spec.scale, 0.0), spec.source_width),
        min(max((box.y_max - spec.pad_top) / spec.scale, 0.0), spec.source_height),
    )
