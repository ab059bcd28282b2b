"""Synthetic desk-scale dataset with known ground truth.

Generates two cases of six 640x640 hotspot images each. Cells are drawn as
non-overlapping stained disks on a jittered grid (positive brown, negative
blue on a pale counterstain background), so every ground-truth box is exact,
no two same-class boxes overlap, and suppression never removes a true cell.

Alongside the images it writes rectangle-annotation JSON, a manifest, a
perfect predictor (one detection per truth), and a corrupted predictor with
exactly 20 percent of each class's truths removed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import RasterImage
from .core import BoundingBox, CellClass, GroundTruth
from .dataset import AnnotationSet, DatasetManifest, ImageRecord

IMAGE_SIZE = 640
GRID_CELLS = 10  # 10x10 grid of 64 px slots per image

BACKGROUND = (236, 218, 224)
POSITIVE_COLOR = (128, 74, 32)   # DAB-like brown
NEGATIVE_COLOR = (96, 112, 168)  # hematoxylin-like blue

# (case_id, positive cells per image, negative cells per image); per-class
# dataset totals stay divisible by 5 so a 20 percent drop is exact.
CASE_LAYOUT = (
    ("caseA", 70, 20),
    ("caseB", 25, 65),
)
IMAGES_PER_CASE = 6


@dataclass(frozen=True)
class FixtureSummary:
    out_dir: Path
    manifest_path: Path
    perfect_predictions: Path
    corrupted_predictions: Path
    n_images: int
    n_truths: dict[str, int]


def _place_cells(
    rng: np.random.Generator, n_pos: int, n_neg: int
) -> list[tuple[float, float, float, CellClass]]:
    """Place disks on a jittered grid; each stays inside its own grid slot."""
    slot = IMAGE_SIZE // GRID_CELLS
    total = n_pos + n_neg
    slots = rng.permutation(GRID_CELLS * GRID_CELLS)[:total]
    classes = [CellClass.POSITIVE] * n_pos + [CellClass.NEGATIVE] * n_neg
    cells = []
    for slot_idx, cls in zip(slots, classes):
        gy, gx = divmod(int(slot_idx), GRID_CELLS)
        r = float(rng.uniform(8.0, 13.0))
        margin = slot / 2 - r - 2.0
        cx = gx * slot + slot / 2 + float(rng.uniform(-margin, margin))
        cy = gy * slot + slot / 2 + float(rng.uniform(-margin, margin))
        cells.append((cx, cy, r, cls))
    return cells


def _render_image(cells: list[tuple[float, float, float, CellClass]]) -> RasterImage:
    px = np.empty((IMAGE_SIZE, IMAGE_SIZE, 3), dtype=np.uint8)
    px[:, :] = BACKGROUND
    yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE]
    for cx, cy, r, cls in cells:
        color = POSITIVE_COLOR if cls is CellClass.POSITIVE else NEGATIVE_COLOR
        x0, x1 = int(cx - r) - 1, int(cx + r) + 2
        y0, y1 = int(cy - r) - 1, int(cy + r) + 2
        patch_y = yy[y0:y1, x0:x1]
        patch_x = xx[y0:y1, x0:x1]
        dist2 = (patch_x - cx) ** 2 + (patch_y - cy) ** 2
        disk = dist2 <= r * r
        rim = (dist2 <= r * r) & (dist2 >= (r - 2.0) ** 2)
        region = px[y0:y1, x0:x1]
        region[disk] = color
        region[rim] = tuple(max(0, c - 40) for c in color)
    return RasterImage(px)


def _truth_boxes(cells: list[tuple[float, float, float, CellClass]]) -> list[GroundTruth]:
    return [
        GroundTruth(BoundingBox(cx - r, cy - r, cx + r, cy + r), cls)
        for cx, cy, r, cls in cells
    ]


def _rect_annotation_doc(image_id: str, truths: list[GroundTruth]) -> dict:
    label_of = {CellClass.POSITIVE: "ki67_positive", CellClass.NEGATIVE: "ki67_negative"}
    return {
        "imagePath": f"{image_id}.png",
        "imageWidth": IMAGE_SIZE,
        "imageHeight": IMAGE_SIZE,
        "shapes": [
            {
                "label": label_of[t.cls],
                "shape_type": "rectangle",
                "points": [[t.box.x_min, t.box.y_min], [t.box.x_max, t.box.y_max]],
            }
            for t in truths
        ],
    }


def _prediction_line(image_id: str, t: GroundTruth, confidence: float) -> str:
    return json.dumps(
        {
            "image_id": image_id,
            "class_id": int(t.cls),
            "x_min": t.box.x_min,
            "y_min": t.box.y_min,
            "x_max": t.box.x_max,
            "y_max": t.box.y_max,
            "confidence": round(confidence, 6),
        }
    )


def generate_fixture(out_dir: str | Path, seed: int = 7) -> FixtureSummary:
    out = Path(out_dir)
    images_dir = out / "images"
    ann_dir = out / "annotations"
    pred_dir = out / "predictions"
    for d in (images_dir, ann_dir, pred_dir):
        d.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    records: list[ImageRecord] = []
    annotations: dict[str, AnnotationSet] = {}
    truths_by_image: dict[str, list[GroundTruth]] = {}

    for case_id, n_pos, n_neg in CASE_LAYOUT:
        for k in range(1, IMAGES_PER_CASE + 1):
            image_id = f"{case_id}_h{k}"
            cells = _place_cells(rng, n_pos, n_neg)
            img = _render_image(cells)
            truths = _truth_boxes(cells)
            path = images_dir / f"{image_id}.png"
            img.save(path)
            (ann_dir / f"{image_id}.json").write_text(
                json.dumps(_rect_annotation_doc(image_id, truths), indent=2) + "\n",
                encoding="utf-8",
            )
            records.append(
                ImageRecord(
                    image_id=image_id,
                    case_id=case_id,
                    width=IMAGE_SIZE,
                    height=IMAGE_SIZE,
                    source_path=str(path),
                )
            )
            annotations[image_id] = AnnotationSet(image_id=image_id, truths=tuple(truths))
            truths_by_image[image_id] = truths

    manifest = DatasetManifest(records=records, annotations=annotations)
    manifest_path = out / "manifest.json"
    manifest.save(manifest_path)

    # Perfect predictor: every truth echoed back with a varied confidence.
    perfect_path = pred_dir / "perfect.jsonl"
    lines = []
    i = 0
    for image_id in sorted(truths_by_image):
        for t in truths_by_image[image_id]:
            confidence = 0.5 + 0.5 * ((i * 37) % 97) / 97.0
            lines.append(_prediction_line(image_id, t, confidence))
            i += 1
    perfect_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    # Corrupted predictor: drop exactly 20 percent of each class's truths.
    indexed: dict[CellClass, list[tuple[str, int]]] = {c: [] for c in CellClass}
    for image_id in sorted(truths_by_image):
        for idx, t in enumerate(truths_by_image[image_id]):
            indexed[t.cls].append((image_id, idx))
    dropped: set[tuple[str, int]] = set()
    for cls in CellClass:
        entries = indexed[cls]
        n_drop = len(entries) // 5
        order = rng.permutation(len(entries))
        dropped.update(entries[int(j)] for j in order[:n_drop])

    corrupted_path = pred_dir / "corrupted.jsonl"
    lines = []
    i = 0
    for image_id in sorted(truths_by_image):
        for idx, t in enumerate(truths_by_image[image_id]):
            confidence = 0.5 + 0.5 * ((i * 37) % 97) / 97.0
            i += 1
            if (image_id, idx) in dropped:
                continue
            lines.append(_prediction_line(image_id, t, confidence))
    corrupted_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    n_truths = {
        cls.name.lower(): len(indexed[cls]) for cls in CellClass
    }
    return FixtureSummary(
        out_dir=out,
        manifest_path=manifest_path,
        perfect_predictions=perfect_path,
        corrupted_predictions=corrupted_path,
        n_images=len(records),
        n_truths=n_truths,
    )
