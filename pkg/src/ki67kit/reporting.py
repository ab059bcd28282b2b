"""Human-facing outputs: annotated overlay rasters and case reports.

Overlay strokes are plain filled rectangles with no anti-aliasing so that
golden-image tests stay bit-exact; positive cells draw red, negative cells
green, matching the clinical display convention.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .augment import RasterImage
from .config import PipelineConfig
from .core import CellClass, Detection
from .evaluation import EvaluationReport
from .scoring import MIN_ADEQUATE_CELLS, Aggregation, CaseScore, ClinicalBand, HotspotScore

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OverlayStyle:
    positive_color: tuple[int, int, int] = (255, 0, 0)
    negative_color: tuple[int, int, int] = (0, 255, 0)
    stroke_width: int = 2
    show_confidence: bool = False

    def __post_init__(self) -> None:
        if self.stroke_width < 1:
            raise ValueError(f"stroke_width must be >= 1, got {self.stroke_width}")

    def color_for(self, cls: CellClass) -> tuple[int, int, int]:
        return self.positive_color if cls is CellClass.POSITIVE else self.negative_color


def render_overlay(
    img: RasterImage, dets: Sequence[Detection], style: OverlayStyle | None = None
) -> RasterImage:
    """Draw rectangle outlines for each detection, in input order.

    Boxes overhanging the frame are clamped with a warning. Pixels outside
    the strokes (and optional confidence labels) are untouched.
    """
    style = style or OverlayStyle()
    px = np.array(img.pixels)
    h, w = px.shape[:2]
    s = style.stroke_width
    label_positions: list[tuple[int, int, str, tuple[int, int, int]]] = []
    for det in dets:
        b = det.box
        if b.x_min < 0 or b.y_min < 0 or b.x_max > w or b.y_max > h:
            logger.warning("detection box (%s, %s, %s, %s) clamped to %dx%d frame",
                           b.x_min, b.y_min, b.x_max, b.y_max, w, h)
        x0 = max(0, min(w, round(b.x_min)))
        y0 = max(0, min(h, round(b.y_min)))
        x1 = max(0, min(w, round(b.x_max)))
        y1 = max(0, min(h, round(b.y_max)))
        if x1 <= x0 or y1 <= y0:
            continue
        color = style.color_for(det.cls)
        px[y0:min(y0 + s, y1), x0:x1] = color
        px[max(y1 - s, y0):y1, x0:x1] = color
        px[y0:y1, x0:min(x0 + s, x1)] = color
        px[y0:y1, max(x1 - s, x0):x1] = color
        if style.show_confidence:
            label_positions.append((x0 + s + 1, y0 + s + 1, f"{det.confidence:.2f}", color))

    if label_positions:
        # PIL's default bitmap font has no anti-aliasing, so re-rendering
        # stays pixel-stable.
        canvas = Image.fromarray(px)
        draw = ImageDraw.Draw(canvas)
        for x, y, text, color in label_positions:
            draw.text((x, y), text, fill=color)
        px = np.asarray(canvas, dtype=np.uint8)
    return RasterImage(px)


def hotspot_to_dict(h: HotspotScore) -> dict:
    return {
        "image_id": h.image_id,
        "n_pos": h.n_pos,
        "n_neg": h.n_neg,
        "index_percent": h.index_percent,
    }


def hotspot_from_dict(d: Mapping) -> HotspotScore:
    return HotspotScore(
        image_id=d["image_id"],
        n_pos=d["n_pos"],
        n_neg=d["n_neg"],
        index_percent=d["index_percent"],
    )


def case_score_to_dict(score: CaseScore, config: PipelineConfig) -> dict:
    """Serialize a case score with its configuration echo for auditability."""
    return {
        "case_id": score.case_id,
        "hotspots": [hotspot_to_dict(h) for h in score.hotspots],
        "pooled_pos": score.pooled_pos,
        "pooled_neg": score.pooled_neg,
        "index_percent": score.index_percent,
        "total_cells": score.total_cells,
        "adequate": score.adequate,
        "band": score.band.value,
        "aggregation": score.aggregation.value,
        "config": {
            "min_confidence": config.min_confidence,
            "nms_threshold": config.nms_threshold,
            "aggregation": config.aggregation.value,
        },
    }


def case_score_from_dict(doc: Mapping) -> CaseScore:
    return CaseScore(
        case_id=doc["case_id"],
        hotspots=tuple(hotspot_from_dict(h) for h in doc["hotspots"]),
        pooled_pos=doc["pooled_pos"],
        pooled_neg=doc["pooled_neg"],
        index_percent=doc["index_percent"],
        total_cells=doc["total_cells"],
        adequate=doc["adequate"],
        band=ClinicalBand(doc["band"]),
        aggregation=Aggregation(doc["aggregation"]),
    )


def render_case_report_text(
    score: CaseScore, config: PipelineConfig, evaluation: EvaluationReport | None = None
) -> str:
    lines = [
        f"Case {score.case_id}",
        f"  Ki-67 index: {score.index_percent:.2f}%",
        f"  band: {score.band.value}",
        f"  cells counted: {score.total_cells} "
        f"({score.pooled_pos} positive, {score.pooled_neg} negative)",
        f"  adequate: {'yes' if score.adequate else 'no'} "
        f"(threshold {MIN_ADEQUATE_CELLS} cells)",
        f"  aggregation: {score.aggregation.value}",
        "  hotspots:",
    ]
    for h in score.hotspots:
        lines.append(
            f"    {h.image_id}: {h.index_percent:.2f}% ({h.n_pos} pos / {h.n_neg} neg)"
        )
    lines.append(
        f"  config: min_confidence={config.min_confidence} "
        f"nms_threshold={config.nms_threshold}"
    )
    if evaluation is not None:
        lines.append(f"  evaluation ({evaluation.run_label}): mAP50={evaluation.map50:.4f}")
    return "\n".join(lines) + "\n"


def emit_case_report(
    score: CaseScore, config: PipelineConfig, evaluation: EvaluationReport | None = None
) -> tuple[dict, str]:
    """Produce the machine (JSON document) and human (plain text) renderings.

    The evaluation section is present only when a report is supplied.
    """
    doc = case_score_to_dict(score, config)
    if evaluation is not None:
        doc["evaluation"] = evaluation.to_dict()
    return doc, render_case_report_text(score, config, evaluation)
