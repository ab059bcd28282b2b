"""Independent reference implementations used as test oracles.

Everything here is deliberately naive and written against the contracts,
not against the library code: IoU by arithmetic and by grid counting,
suppression by repeated selection scans, matching by exhaustive enumeration,
AP by per-segment envelope maxima, and geometric transforms by per-pixel
index loops. Keep these slow and obvious.
"""
from __future__ import annotations

import numpy as np

from ki67kit.core import BoundingBox, CellClass, Detection, GroundTruth


def ref_iou(a: BoundingBox, b: BoundingBox) -> float:
    ix0, iy0 = max(a.x_min, b.x_min), max(a.y_min, b.y_min)
    ix1, iy1 = min(a.x_max, b.x_max), min(a.y_max, b.y_max)
    if ix1 <= ix0 or iy1 <= iy0:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    return inter / (area_a + area_b - inter)


def grid_iou(a: BoundingBox, b: BoundingBox, resolution: int = 400) -> float:
    """Approximate IoU by counting sample-point membership on a fine grid."""
    x0 = min(a.x_min, b.x_min)
    y0 = min(a.y_min, b.y_min)
    x1 = max(a.x_max, b.x_max)
    y1 = max(a.y_max, b.y_max)
    xs = np.linspace(x0, x1, resolution, endpoint=False) + (x1 - x0) / (2 * resolution)
    ys = np.linspace(y0, y1, resolution, endpoint=False) + (y1 - y0) / (2 * resolution)
    gx, gy = np.meshgrid(xs, ys)
    in_a = (gx >= a.x_min) & (gx < a.x_max) & (gy >= a.y_min) & (gy < a.y_max)
    in_b = (gx >= b.x_min) & (gx < b.x_max) & (gy >= b.y_min) & (gy < b.y_max)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


def brute_force_nms(
    dets: list[Detection], iou_threshold: float, class_aware: bool = True
) -> list[Detection]:
    """Suppression by repeated full scans over an alive list.

    Same contract as the library: highest confidence wins, ties break by
    smaller x_min, then y_min, then class code; a kept detection removes
    remaining (same-class, when class_aware) detections with IoU strictly
    above the threshold.
    """
    alive = list(range(len(dets)))
    kept: list[Detection] = []
    while alive:
        best = alive[0]
        for i in alive[1:]:
            a, b = dets[i], dets[best]
            key_a = (-a.confidence, a.box.x_min, a.box.y_min, int(a.cls))
            key_b = (-b.confidence, b.box.x_min, b.box.y_min, int(b.cls))
            if key_a < key_b:
                best = i
        kept.append(dets[best])
        survivors = []
        for i in alive:
            if i == best:
                continue
            if class_aware and dets[i].cls != dets[best].cls:
                survivors.append(i)
            elif ref_iou(dets[i].box, dets[best].box) <= iou_threshold:
                survivors.append(i)
        alive = survivors
    return kept


def max_tp_counts(
    dets: list[Detection],
    truths: list[GroundTruth],
    iou_thresh: float,
) -> dict[CellClass, tuple[int, int, int]]:
    """Exhaustive max-TP one-to-one matching; returns (tp, fp, fn) per class."""
    result = {}
    for cls in CellClass:
        d_boxes = [d.box for d in dets if d.cls is cls]
        t_boxes = [t.box for t in truths if t.cls is cls]
        feasible = [
            [ref_iou(db, tb) >= iou_thresh for tb in t_boxes] for db in d_boxes
        ]

        def best_from(i: int, used: frozenset[int]) -> int:
            if i == len(d_boxes):
                return 0
            best = best_from(i + 1, used)  # leave detection i unmatched
            for j, ok in enumerate(feasible[i]):
                if ok and j not in used:
                    best = max(best, 1 + best_from(i + 1, used | {j}))
            return best

        tp = best_from(0, frozenset())
        result[cls] = (tp, len(d_boxes) - tp, len(t_boxes) - tp)
    return result


def naive_average_precision(points) -> float:
    """AP as a sum over recall segments of the max precision at or beyond.

    Independent of the right-to-left running-max formulation: the envelope
    value for each segment is recomputed from scratch by scanning the curve.
    """
    if not points:
        return 0.0
    recalls = sorted({p.recall for p in points})
    ap = 0.0
    prev = 0.0
    for r in recalls:
        envelope = max(p.precision for p in points if p.recall >= r)
        ap += (r - prev) * envelope
        prev = r
    return ap


# per-pixel transform oracles ------------------------------------------------

def oracle_hflip(px: np.ndarray) -> np.ndarray:
    h, w = px.shape[:2]
    out = np.empty_like(px)
    for y in range(h):
        for x in range(w):
            out[y, w - 1 - x] = px[y, x]
    return out


def oracle_vflip(px: np.ndarray) -> np.ndarray:
    h, w = px.shape[:2]
    out = np.empty_like(px)
    for y in range(h):
        for x in range(w):
            out[h - 1 - y, x] = px[y, x]
    return out


def oracle_rot180(px: np.ndarray) -> np.ndarray:
    h, w = px.shape[:2]
    out = np.empty_like(px)
    for y in range(h):
        for x in range(w):
            out[h - 1 - y, w - 1 - x] = px[y, x]
    return out


def oracle_rot90cw(px: np.ndarray) -> np.ndarray:
    h, w = px.shape[:2]
    out = np.empty((w, h) + px.shape[2:], dtype=px.dtype)
    for y in range(h):
        for x in range(w):
            out[x, h - 1 - y] = px[y, x]
    return out


def oracle_rot90ccw(px: np.ndarray) -> np.ndarray:
    h, w = px.shape[:2]
    out = np.empty((w, h) + px.shape[2:], dtype=px.dtype)
    for y in range(h):
        for x in range(w):
            out[w - 1 - x, y] = px[y, x]
    return out


def _normalized(p1: tuple[float, float], p2: tuple[float, float]) -> BoundingBox:
    return BoundingBox(
        min(p1[0], p2[0]), min(p1[1], p2[1]), max(p1[0], p2[0]), max(p1[1], p2[1])
    )


def oracle_box_map(b: BoundingBox, kind: str, width: int, height: int) -> BoundingBox:
    """Map both corners through the continuous point formula and re-normalize."""
    corners = [(b.x_min, b.y_min), (b.x_max, b.y_max)]
    if kind == "hflip":
        mapped = [(width - x, y) for x, y in corners]
    elif kind == "vflip":
        mapped = [(x, height - y) for x, y in corners]
    elif kind == "rot180":
        mapped = [(width - x, height - y) for x, y in corners]
    elif kind == "rot90cw":
        mapped = [(height - y, x) for x, y in corners]
    elif kind == "rot90ccw":
        mapped = [(y, width - x) for x, y in corners]
    else:
        raise ValueError(kind)
    return _normalized(mapped[0], mapped[1])


# seeded instance generators --------------------------------------------------

def random_box(rng: np.random.Generator, frame: float = 640.0, max_size: float = 200.0) -> BoundingBox:
    x0 = float(rng.uniform(0, frame - 1))
    y0 = float(rng.uniform(0, frame - 1))
    w = float(rng.uniform(1, max_size))
    h = float(rng.uniform(1, max_size))
    return BoundingBox(x0, y0, min(x0 + w, frame), min(y0 + h, frame))


def random_detections(
    rng: np.random.Generator,
    n: int,
    frame: float = 640.0,
    max_size: float = 200.0,
    quantize_conf: bool = True,
) -> list[Detection]:
    dets = []
    for _ in range(n):
        conf = float(rng.integers(0, 21)) / 20.0 if quantize_conf else float(rng.uniform(0, 1))
        dets.append(
            Detection(
                box=random_box(rng, frame, max_size),
                cls=CellClass(int(rng.integers(0, 2))),
                confidence=conf,
            )
        )
    return dets


def random_truths(
    rng: np.random.Generator, n: int, frame: float = 640.0, max_size: float = 200.0
) -> list[GroundTruth]:
    return [
        GroundTruth(
            box=random_box(rng, frame, max_size),
            cls=CellClass(int(rng.integers(0, 2))),
        )
        for _ in range(n)
    ]


def matching_instance(
    rng: np.random.Generator, max_truths: int = 6, max_dets: int = 6
) -> tuple[list[Detection], list[GroundTruth]]:
    """Detections derived from jittered truths plus distractors, so that
    instances actually exercise the matcher instead of being all-FP noise."""
    n_truth = int(rng.integers(1, max_truths + 1))
    truths = random_truths(rng, n_truth, frame=200.0, max_size=80.0)
    dets: list[Detection] = []
    n_det = int(rng.integers(0, max_dets + 1))
    for _ in range(n_det):
        conf = float(rng.uniform(0.05, 1.0))
        if truths and rng.uniform() < 0.7:
            src = truths[int(rng.integers(0, len(truths)))]
            jitter = rng.uniform(-10, 10, size=4)
            b = src.box
            x0 = max(0.0, min(b.x_min + jitter[0], 198.0))
            y0 = max(0.0, min(b.y_min + jitter[1], 198.0))
            x1 = max(x0 + 1.0, min(b.x_max + jitter[2], 200.0))
            y1 = max(y0 + 1.0, min(b.y_max + jitter[3], 200.0))
            cls = src.cls if rng.uniform() < 0.9 else CellClass(int(rng.integers(0, 2)))
            dets.append(Detection(BoundingBox(x0, y0, x1, y1), cls, conf))
        else:
            dets.append(
                Detection(random_box(rng, 200.0, 80.0), CellClass(int(rng.integers(0, 2))), conf)
            )
    return dets, truths
