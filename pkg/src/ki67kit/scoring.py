"""Clinical Ki-67 proliferation scoring.

The index is the percentage of positive cells among all counted tumor cells.
Case scores pool raw counts across hotspot images before dividing, so every
cell carries equal weight; a mean-of-hotspot-indices mode exists for
sensitivity analysis. Banding follows the consensus thresholds: strictly
below 5 percent is low, strictly above 30 percent is high, the boundaries
themselves are intermediate. A case needs at least 500 counted cells to be
flagged adequate.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from .core import CellClass, Detection
from .errors import EmptyCaseError, NoCellsError

MIN_ADEQUATE_CELLS = 500
LOW_BAND_BELOW = 5.0
HIGH_BAND_ABOVE = 30.0


class ClinicalBand(enum.Enum):
    LOW = "low"
    INTERMEDIATE = "intermediate"
    HIGH = "high"


class Aggregation(enum.Enum):
    POOLED = "pooled"
    MEAN = "mean"


@dataclass(frozen=True)
class HotspotScore:
    image_id: str
    n_pos: int
    n_neg: int
    index_percent: float


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    hotspots: tuple[HotspotScore, ...]
    pooled_pos: int
    pooled_neg: int
    index_percent: float
    total_cells: int
    adequate: bool
    band: ClinicalBand
    aggregation: Aggregation = Aggregation.POOLED


def ki67_index(n_pos: int, n_neg: int) -> float:
    """Proliferation index in percent: 100 * positive / (positive + negative)."""
    if n_pos < 0 or n_neg < 0:
        raise ValueError(f"cell counts must be non-negative, got ({n_pos}, {n_neg})")
    total = n_pos + n_neg
    if total == 0:
        raise NoCellsError("cannot compute an index over zero cells")
    return 100.0 * n_pos / total


def classify_band(index_percent: float) -> ClinicalBand:
    """Band an index: <5 low, >30 high, boundaries inclusive to intermediate."""
    if not (0.0 <= index_percent <= 100.0):
        raise ValueError(f"index must be in [0, 100], got {index_percent}")
    if index_percent < LOW_BAND_BELOW:
        return ClinicalBand.LOW
    if index_percent > HIGH_BAND_ABOVE:
        return ClinicalBand.HIGH
    return ClinicalBand.INTERMEDIATE


def score_image(dets: Sequence[Detection], image_id: str = "") -> HotspotScore:
    """Count suppressed detections per class and compute the hotspot index."""
    n_pos = sum(1 for d in dets if d.cls is CellClass.POSITIVE)
    n_neg = sum(1 for d in dets if d.cls is CellClass.NEGATIVE)
    return HotspotScore(
        image_id=image_id,
        n_pos=n_pos,
        n_neg=n_neg,
        index_percent=ki67_index(n_pos, n_neg),
    )


def score_case(
    case_id: str,
    hotspots: Sequence[HotspotScore],
    aggregation: Aggregation = Aggregation.POOLED,
) -> CaseScore:
    """Combine hotspot counts into one case-level score."""
    if not hotspots:
        raise EmptyCaseError(f"case {case_id!r} has no hotspots to score")
    pooled_pos = sum(h.n_pos for h in hotspots)
    pooled_neg = sum(h.n_neg for h in hotspots)
    total = pooled_pos + pooled_neg
    if total == 0:
        raise NoCellsError(f"case {case_id!r} has zero counted cells")
    if aggregation is Aggregation.POOLED:
        index = ki67_index(pooled_pos, pooled_neg)
    else:
        index = sum(h.index_percent for h in hotspots) / len(hotspots)
    return CaseScore(
        case_id=case_id,
        hotspots=tuple(hotspots),
        pooled_pos=pooled_pos,
        pooled_neg=pooled_neg,
        index_percent=index,
        total_cells=total,
        adequate=total >= MIN_ADEQUATE_CELLS,
        band=classify_band(index),
        aggregation=aggregation,
    )
