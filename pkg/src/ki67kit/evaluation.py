"""Detection evaluation: greedy IoU matching, PR curves, AP at IoU 0.5, mAP50.

Matching is greedy per class: detections in descending-confidence order each
claim the unmatched same-class truth of highest IoU when that IoU reaches the
threshold. AP uses all-point interpolation (the monotone precision envelope
integrated over recall). mAP averages the per-class APs over classes that
have at least one ground truth in the evaluated subset.

The evaluator consumes already-suppressed detections; it never runs NMS.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import CellClass, Detection, GroundTruth, iou
from .dataset import DatasetManifest
from .errors import EmptySubsetError, NoGroundTruthError


@dataclass(frozen=True)
class MatchRecord:
    detection: Detection
    truth_index: int | None  # index into the image's same-class truth list


@dataclass(frozen=True)
class ClassMatches:
    records: tuple[MatchRecord, ...]  # descending confidence
    n_truth: int

    @property
    def tp(self) -> int:
        return sum(1 for r in self.records if r.truth_index is not None)

    @property
    def fp(self) -> int:
        return sum(1 for r in self.records if r.truth_index is None)

    @property
    def fn(self) -> int:
        return self.n_truth - self.tp


@dataclass(frozen=True)
class MatchOutcome:
    image_id: str
    per_class: Mapping[CellClass, ClassMatches]


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


def match_image(
    dets: Sequence[Detection],
    truths: Sequence[GroundTruth],
    iou_thresh: float = 0.5,
    image_id: str = "",
) -> MatchOutcome:
    """Match one image's detections against its truths, per class.

    IoU ties between candidate truths break toward the lower truth index;
    classes never cross-match.
    """
    per_class: dict[CellClass, ClassMatches] = {}
    for cls in CellClass:
        cls_truths = [t for t in truths if t.cls is cls]
        cls_dets = sorted(
            (d for d in dets if d.cls is cls),
            key=lambda d: -d.confidence,
        )
        taken = [False] * len(cls_truths)
        records: list[MatchRecord] = []
        for det in cls_dets:
            best_idx: int | None = None
            best_iou = 0.0
            for idx, truth in enumerate(cls_truths):
                if taken[idx]:
                    continue
                value = iou(det.box, truth.box)
                if value >= iou_thresh and value > best_iou:
                    best_iou = value
                    best_idx = idx
            if best_idx is not None:
                taken[best_idx] = True
            records.append(MatchRecord(det, best_idx))
        per_class[cls] = ClassMatches(records=tuple(records), n_truth=len(cls_truths))
    return MatchOutcome(image_id=image_id, per_class=per_class)


def pr_curve(outcomes: Iterable[MatchOutcome], cls: CellClass) -> list[PRPoint]:
    """Precision/recall sweep over all detections of one class.

    Detections sharing a confidence are processed as one group and produce a
    single point, so the curve does not depend on input ordering.
    """
    labeled: list[tuple[float, bool]] = []
    n_truth = 0
    for outcome in outcomes:
        matches = outcome.per_class.get(cls)
        if matches is None:
            continue
        n_truth += matches.n_truth
        labeled.extend((r.detection.confidence, r.truth_index is not None) for r in matches.records)
    if n_truth == 0:
        raise NoGroundTruthError(f"no ground truth of class {cls.name} in outcomes")

    labeled.sort(key=lambda pair: -pair[0])
    points: list[PRPoint] = []
    tp = fp = 0
    i = 0
    while i < len(labeled):
        conf = labeled[i][0]
        while i < len(labeled) and labeled[i][0] == conf:
            if labeled[i][1]:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append(PRPoint(threshold=conf, precision=tp / (tp + fp), recall=tp / n_truth))
    return points


def average_precision(curve: Sequence[PRPoint]) -> float:
    """All-point interpolated AP: area under the monotone precision envelope."""
    if not curve:
        return 0.0
    recalls = [0.0] + [p.recall for p in curve]
    envelope = [0.0] + [p.precision for p in curve]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = 0.0
    for i in range(1, len(recalls)):
        ap += (recalls[i] - recalls[i - 1]) * envelope[i]
    return ap


@dataclass(frozen=True)
class ClassMetrics:
    ap50: float | None  # None when the class has no ground truth
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    n_truth: int


@dataclass(frozen=True)
class EvaluationReport:
    run_label: str
    iou_threshold: float
    per_class: Mapping[CellClass, ClassMetrics]
    map50: float

    def to_dict(self) -> dict:
        return {
            "run_label": self.run_label,
            "iou_threshold": self.iou_threshold,
            "map50": self.map50,
            "per_class": {
                cls.name.lower(): {
                    "ap50": m.ap50,
                    "precision": m.precision,
                    "recall": m.recall,
                    "tp": m.tp,
                    "fp": m.fp,
                    "fn": m.fn,
                    "n_truth": m.n_truth,
                }
                for cls, m in self.per_class.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EvaluationReport":
        per_class = {
            CellClass[name.upper()]: ClassMetrics(
                ap50=m["ap50"],
                precision=m["precision"],
                recall=m["recall"],
                tp=m["tp"],
                fp=m["fp"],
                fn=m["fn"],
                n_truth=m["n_truth"],
            )
            for name, m in doc["per_class"].items()
        }
        return cls(
            run_label=doc["run_label"],
            iou_threshold=doc["iou_threshold"],
            per_class=per_class,
            map50=doc["map50"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvaluationReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def pr_curve_to_csv(curve: Sequence[PRPoint]) -> str:
    lines = ["threshold,precision,recall"]
    lines += [f"{p.threshold:.6f},{p.precision:.6f},{p.recall:.6f}" for p in curve]
    return "\n".join(lines) + "\n"


def evaluate_run(
    predictions: Mapping[str, Sequence[Detection]],
    manifest: DatasetManifest,
    image_ids: Sequence[str] | None = None,
    iou_thresh: float = 0.5,
    run_label: str = "run",
) -> EvaluationReport:
    """Evaluate one prediction set over a manifest subset.

    ``image_ids`` defaults to every record in the manifest; predictions for
    images outside the subset are ignored. Images with no prediction entry
    count all their truths as missed.
    """
    ids = list(image_ids) if image_ids is not None else manifest.image_ids()
    if not ids:
        raise EmptySubsetError("no images in evaluation subset")

    outcomes = [
        match_image(
            list(predictions.get(image_id, ())),
            list(manifest.truths_for(image_id)),
            iou_thresh=iou_thresh,
            image_id=image_id,
        )
        for image_id in ids
    ]

    per_class: dict[CellClass, ClassMetrics] = {}
    aps: list[float] = []
    for cls in CellClass:
        tp = sum(o.per_class[cls].tp for o in outcomes)
        fp = sum(o.per_class[cls].fp for o in outcomes)
        fn = sum(o.per_class[cls].fn for o in outcomes)
        n_truth = sum(o.per_class[cls].n_truth for o in outcomes)
        if n_truth > 0:
            ap: float | None = average_precision(pr_curve(outcomes, cls))
            aps.append(ap)
        else:
            ap = None
        per_class[cls] = ClassMetrics(
            ap50=ap,
            precision=tp / (tp + fp) if tp + fp else 0.0,
            recall=tp / (tp + fn) if tp + fn else 0.0,
            tp=tp,
            fp=fp,
            fn=fn,
            n_truth=n_truth,
        )
    if not aps:
        raise NoGroundTruthError("evaluated subset contains no ground truth of any class")
    return EvaluationReport(
        run_label=run_label,
        iou_threshold=iou_thresh,
        per_class=per_class,
        map50=sum(aps) / len(aps),
    )


@dataclass(frozen=True)
class ComparisonRow:
    rank: int
    run_label: str
    map50: float
    ap_positive: float | None
    ap_negative: float | None


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple[ComparisonRow, ...]

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "rank": r.rank,
                    "run_label": r.run_label,
                    "map50": r.map50,
                    "ap_positive": r.ap_positive,
                    "ap_negative": r.ap_negative,
                }
                for r in self.rows
            ]
        }

    def to_text(self) -> str:
        header = f"{'rank':>4}  {'run':<24} {'mAP50':>8} {'AP pos':>8} {'AP neg':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            ap_pos = f"{r.ap_positive:.4f}" if r.ap_positive is not None else "-"
            ap_neg = f"{r.ap_negative:.4f}" if r.ap_negative is not None else "-"
            lines.append(
                f"{r.rank:>4}  {r.run_label:<24} {r.map50:>8.4f} {ap_pos:>8} {ap_neg:>8}"
            )
        return "\n".join(lines) + "\n"


def compare_runs(reports: Sequence[EvaluationReport]) -> ComparisonTable:
    """Rank runs by mAP50; ties break by positive-class AP, then label."""

    def ap_of(report: EvaluationReport, cls: CellClass) -> float | None:
        metrics = report.per_class.get(cls)
        return metrics.ap50 if metrics is not None else None

    def sort_key(report: EvaluationReport):
        ap_pos = ap_of(report, CellClass.POSITIVE)
        return (-report.map50, -(ap_pos if ap_pos is not None else -1.0), report.run_label)

    ranked = sorted(reports, key=sort_key)
    rows = tuple(
        ComparisonRow(
            rank=i + 1,
            run_label=r.run_label,
            map50=r.map50,
            ap_positive=ap_of(r, CellClass.POSITIVE),
            ap_negative=ap_of(r, CellClass.NEGATIVE),
        )
        for i, r in enumerate(ranked)
    )
    return ComparisonTable(rows=rows)
