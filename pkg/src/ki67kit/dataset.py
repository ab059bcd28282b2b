"""Annotation ingestion, manifest validation, and leakage-safe dataset splits.

Supported interchange formats:

* Rectangle-annotation JSON, one document per image::

      {"imagePath": str, "imageWidth": int, "imageHeight": int,
       "shapes": [{"label": str, "shape_type": "rectangle",
                   "points": [[x1, y1], [x2, y2]]}]}

* YOLO text, one line per box: ``class_id cx cy w h`` with values
  normalized to [0, 1], fixed 6-decimal precision.

* The manifest itself, a single JSON document with a ``schema_version``
  field (current: 1).
"""
from __future__ import annotations

import dataclasses
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import BoundingBox, CellClass, GroundTruth
from .errors import (
    CountMismatchError,
    DegenerateBoxError,
    MalformedDocumentError,
    MalformedLineError,
    OutOfBoundsBoxError,
    OutOfRangeError,
    SplitExistsError,
    UnknownClassIdError,
    UnknownLabelError,
)

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1

# Annotation label strings vary between annotators, so the mapping is
# configuration with these defaults rather than hard-coded.
DEFAULT_LABEL_MAP: dict[str, CellClass] = {
    "ki67_positive": CellClass.POSITIVE,
    "ki67_negative": CellClass.NEGATIVE,
}

# Boxes overhanging the image by at most this much are treated as annotation
# jitter and clamped; anything larger is an error.
CLAMP_TOLERANCE_PX = 2.0


class Split(enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    severity: Severity
    image_id: str
    message: str


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    case_id: str
    width: int
    height: int
    source_path: str
    parent_id: str | None = None

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dimensions must be positive, got {self.width}x{self.height}")


@dataclass(frozen=True)
class AnnotationSet:
    image_id: str
    truths: tuple[GroundTruth, ...]


@dataclass(frozen=True)
class SplitSpec:
    """Either three fractions summing to 1, or explicit per-split counts."""

    fractions: tuple[float, float, float] | None = (0.8, 0.1, 0.1)
    counts: tuple[int, int, int] | None = None
    seed: int = 0
    group_by_case: bool = False

    def __post_init__(self) -> None:
        if self.counts is None:
            if self.fractions is None:
                raise ValueError("either fractions or counts must be given")
            if any(f < 0 or f > 1 for f in self.fractions):
                raise ValueError(f"fractions must each be in [0, 1], got {self.fractions}")
            if abs(sum(self.fractions) - 1.0) > 1e-9:
                raise ValueError(f"fractions must sum to 1, got {self.fractions}")
        elif any(c < 0 for c in self.counts):
            raise ValueError(f"counts must be non-negative, got {self.counts}")


@dataclass
class DatasetManifest:
    """Images, annotations, and (optionally) a train/val/test assignment.

    Treated as immutable after construction; operations that change it
    return a new manifest.
    """

    records: list[ImageRecord]
    annotations: dict[str, AnnotationSet] = field(default_factory=dict)
    split: dict[str, Split] = field(default_factory=dict)

    def record_by_id(self, image_id: str) -> ImageRecord:
        for r in self.records:
            if r.image_id == image_id:
                return r
        raise KeyError(image_id)

    def image_ids(self) -> list[str]:
        return [r.image_id for r in self.records]

    def base_records(self) -> list[ImageRecord]:
        return [r for r in self.records if r.parent_id is None]

    def case_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.case_id, None)
        return list(seen)

    def truths_for(self, image_id: str) -> tuple[GroundTruth, ...]:
        ann = self.annotations.get(image_id)
        return ann.truths if ann is not None else ()

    def to_dict(self) -> dict:
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "records": [dataclasses.asdict(r) for r in self.records],
            "annotations": {
                image_id: [
                    {
                        "x_min": t.box.x_min,
                        "y_min": t.box.y_min,
                        "x_max": t.box.x_max,
                        "y_max": t.box.y_max,
                        "cls": int(t.cls),
                    }
                    for t in ann.truths
                ]
                for image_id, ann in sorted(self.annotations.items())
            },
            "split": {image_id: s.value for image_id, s in sorted(self.split.items())},
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DatasetManifest":
        version = doc.get("schema_version")
        if version != MANIFEST_SCHEMA_VERSION:
            raise MalformedDocumentError(f"unsupported manifest schema_version: {version!r}")
        records = [ImageRecord(**r) for r in doc["records"]]
        annotations = {
            image_id: AnnotationSet(
                image_id=image_id,
                truths=tuple(
                    GroundTruth(
                        box=BoundingBox(t["x_min"], t["y_min"], t["x_max"], t["y_max"]),
                        cls=CellClass(t["cls"]),
                    )
                    for t in truths
                ),
            )
            for image_id, truths in doc.get("annotations", {}).items()
        }
        split = {image_id: Split(s) for image_id, s in doc.get("split", {}).items()}
        return cls(records=records, annotations=annotations, split=split)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedDocumentError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def _clamp_box(
    x_min: float, y_min: float, x_max: float, y_max: float, width: int, height: int, context: str
) -> tuple[float, float, float, float]:
    overhang = max(0.0 - x_min, 0.0 - y_min, x_max - width, y_max - height, 0.0)
    if overhang > CLAMP_TOLERANCE_PX:
        raise OutOfBoundsBoxError(
            f"{context}: box ({x_min}, {y_min}, {x_max}, {y_max}) overhangs "
            f"{width}x{height} image by {overhang:.2f} px (> {CLAMP_TOLERANCE_PX} px)"
        )
    if overhang > 0:
        logger.warning(
            "%s: clamping box (%.2f, %.2f, %.2f, %.2f) to %dx%d frame",
            context, x_min, y_min, x_max, y_max, width, height,
        )
    return (
        min(max(x_min, 0.0), float(width)),
        min(max(y_min, 0.0), float(height)),
        min(max(x_max, 0.0), float(width)),
        min(max(y_max, 0.0), float(height)),
    )


def parse_rect_annotations(
    doc: Mapping, label_map: Mapping[str, CellClass] | None = None
) -> AnnotationSet:
    """Parse one rectangle-annotation JSON document into an AnnotationSet.

    Corner points may come in any order; they are normalized to
    (x_min, y_min, x_max, y_max). Boxes overhanging the image by at most
    2 px are clamped with a warning.
    """
    labels = DEFAULT_LABEL_MAP if label_map is None else label_map
    try:
        image_path = doc["imagePath"]
        width = int(doc["imageWidth"])
        height = int(doc["imageHeight"])
        shapes = doc["shapes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocumentError(f"missing or invalid field: {exc}") from exc
    if width <= 0 or height <= 0:
        raise MalformedDocumentError(f"invalid image dimensions {width}x{height}")
    image_id = Path(image_path).stem

    truths: list[GroundTruth] = []
    for i, shape in enumerate(shapes):
        context = f"{image_id} shape {i}"
        try:
            label = shape["label"]
            shape_type = shape["shape_type"]
            points = shape["points"]
        except (KeyError, TypeError) as exc:
            raise MalformedDocumentError(f"{context}: missing field: {exc}") from exc
        if shape_type != "rectangle":
            raise MalformedDocumentError(f"{context}: unsupported shape_type {shape_type!r}")
        if label not in labels:
            raise UnknownLabelError(f"{context}: label {label!r} not in label map")
        if len(points) != 2 or any(len(p) != 2 for p in points):
            raise MalformedDocumentError(f"{context}: rectangle needs exactly 2 corner points")
        (ax, ay), (bx, by) = points
        x_min, x_max = min(ax, bx), max(ax, bx)
        y_min, y_max = min(ay, by), max(ay, by)
        x_min, y_min, x_max, y_max = _clamp_box(x_min, y_min, x_max, y_max, width, height, context)
        if x_min >= x_max or y_min >= y_max:
            raise DegenerateBoxError(f"{context}: zero-area box after clamping")
        truths.append(GroundTruth(box=BoundingBox(x_min, y_min, x_max, y_max), cls=labels[label]))
    return AnnotationSet(image_id=image_id, truths=tuple(truths))


def parse_yolo_line(line: str, width: int, height: int) -> GroundTruth:
    """Parse one normalized ``class_id cx cy w h`` line into pixel corners."""
    tokens = line.split()
    if len(tokens) != 5:
        raise MalformedLineError(f"expected 5 fields, got {len(tokens)}: {line!r}")
    try:
        class_id = int(tokens[0])
        cx, cy, w, h = (float(t) for t in tokens[1:])
    except ValueError as exc:
        raise MalformedLineError(f"non-numeric field in {line!r}") from exc
    for name, value in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
        if not (0.0 <= value <= 1.0):
            raise OutOfRangeError(f"{name}={value} outside [0, 1] in {line!r}")
    try:
        cls = CellClass(class_id)
    except ValueError as exc:
        raise UnknownClassIdError(f"class_id {class_id} not in {{0, 1}}") from exc
    if w == 0.0 or h == 0.0:
        raise DegenerateBoxError(f"zero-area box in {line!r}")
    x_min = max((cx - w / 2) * width, 0.0)
    y_min = max((cy - h / 2) * height, 0.0)
    x_max = min((cx + w / 2) * width, float(width))
    y_max = min((cy + h / 2) * height, float(height))
    if x_min >= x_max or y_min >= y_max:
        raise DegenerateBoxError(f"zero-area box after clamping in {line!r}")
    return GroundTruth(box=BoundingBox(x_min, y_min, x_max, y_max), cls=cls)


def export_yolo_line(t: GroundTruth, width: int, height: int) -> str:
    """Inverse of parse_yolo_line; fixed 6-decimal normalized output."""
    b = t.box
    cx = (b.x_min + b.x_max) / 2 / width
    cy = (b.y_min + b.y_max) / 2 / height
    w = (b.x_max - b.x_min) / width
    h = (b.y_max - b.y_min) / height
    return f"{int(t.cls)} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}"


def validate_manifest(m: DatasetManifest) -> list[Finding]:
    """Scan a manifest for structural problems; returns findings, never raises."""
    findings: list[Finding] = []
    by_id: dict[str, ImageRecord] = {}
    for r in m.records:
        if r.image_id in by_id:
            findings.append(Finding(Severity.ERROR, r.image_id, "duplicate image_id"))
        by_id[r.image_id] = r

    for r in m.records:
        if r.parent_id is not None:
            parent = by_id.get(r.parent_id)
            if parent is None:
                findings.append(
                    Finding(Severity.ERROR, r.image_id, f"parent_id {r.parent_id!r} not in manifest")
                )
            elif parent.parent_id is not None:
                findings.append(
                    Finding(Severity.ERROR, r.image_id, f"parent_id {r.parent_id!r} is itself augmented")
                )

    for image_id, ann in m.annotations.items():
        record = by_id.get(image_id)
        if record is None:
            findings.append(Finding(Severity.ERROR, image_id, "annotations for unknown image_id"))
            continue
        for t in ann.truths:
            b = t.box
            if b.x_max > record.width or b.y_max > record.height:
                findings.append(
                    Finding(
                        Severity.ERROR,
                        image_id,
                        f"box ({b.x_min}, {b.y_min}, {b.x_max}, {b.y_max}) out of bounds "
                        f"for {record.width}x{record.height} image",
                    )
                )

    for r in m.records:
        ann = m.annotations.get(r.image_id)
        if ann is None or not ann.truths:
            findings.append(Finding(Severity.WARNING, r.image_id, "image has zero annotations"))

    if m.split:
        for r in m.records:
            if r.image_id not in m.split:
                findings.append(Finding(Severity.ERROR, r.image_id, "record missing from split"))
        for image_id in m.split:
            if image_id not in by_id:
                findings.append(Finding(Severity.ERROR, image_id, "split entry for unknown image_id"))
        for r in m.records:
            if r.parent_id is None or r.image_id not in m.split:
                continue
            parent_split = m.split.get(r.parent_id)
            if parent_split is not None and m.split[r.image_id] is not parent_split:
                findings.append(
                    Finding(
                        Severity.ERROR,
                        r.image_id,
                        f"split leakage: augmented record in {m.split[r.image_id].value} "
                        f"but parent {r.parent_id!r} in {parent_split.value}",
                    )
                )
    return findings


def _largest_remainder_counts(n: int, fractions: tuple[float, float, float]) -> tuple[int, ...]:
    quotas = [f * n for f in fractions]
    counts = [int(q) for q in quotas]
    leftover = n - sum(counts)
    # Ties in remainder resolve in train/val/test order.
    order = sorted(range(3), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return tuple(counts)


def split_dataset(m: DatasetManifest, spec: SplitSpec, overwrite: bool = False) -> DatasetManifest:
    """Assign every record to train/val/test, deterministically from the seed.

    Split units are base images (or whole cases with ``group_by_case``);
    augmented records always inherit the split of their parent, so augmented
    twins never straddle splits. The shuffle uses numpy's PCG64 generator,
    which is stable across platforms for a fixed seed.
    """
    if m.split and not overwrite:
        raise SplitExistsError("manifest already has a split; pass overwrite=True to replace it")

    base = m.base_records()
    if spec.group_by_case:
        units = sorted({r.case_id for r in base})
    else:
        units = sorted(r.image_id for r in base)
    n = len(units)
    if n == 0:
        raise CountMismatchError("manifest has no base records to split")

    if spec.counts is not None:
        counts = spec.counts
        if sum(counts) != n:
            raise CountMismatchError(
                f"explicit counts {counts} sum to {sum(counts)} but there are {n} split units"
            )
    else:
        assert spec.fractions is not None
        counts = _largest_remainder_counts(n, spec.fractions)

    rng = np.random.default_rng(spec.seed)
    shuffled = [units[i] for i in rng.permutation(n)]
    unit_split: dict[str, Split] = {}
    bounds = (counts[0], counts[0] + counts[1], n)
    for i, unit in enumerate(shuffled):
        if i < bounds[0]:
            unit_split[unit] = Split.TRAIN
        elif i < bounds[1]:
            unit_split[unit] = Split.VAL
        else:
            unit_split[unit] = Split.TEST

    split: dict[str, Split] = {}
    for r in base:
        key = r.case_id if spec.group_by_case else r.image_id
        split[r.image_id] = unit_split[key]
    for r in m.records:
        if r.parent_id is not None:
            split[r.image_id] = split[r.parent_id]

    return DatasetManifest(records=list(m.records), annotations=dict(m.annotations), split=split)


def split_sizes(m: DatasetManifest) -> dict[Split, int]:
    sizes = {s: 0 for s in Split}
    for s in m.split.values():
        sizes[s] += 1
    return sizes


def subset_ids(m: DatasetManifest, split: Split | None = None) -> list[str]:
    """Image ids in manifest order, optionally restricted to one split."""
    if split is None:
        return m.image_ids()
    return [r.image_id for r in m.records if m.split.get(r.image_id) is split]


def read_yolo_file(text: str, width: int, height: int) -> list[GroundTruth]:
    return [
        parse_yolo_line(line, width, height)
        for line in text.splitlines()
        if line.strip()
    ]


def write_yolo_file(truths: Iterable[GroundTruth], width: int, height: int) -> str:
    return "".join(export_yolo_line(t, width, height) + "\n" for t in truths)
