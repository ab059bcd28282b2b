"""Pipeline configuration: file-supplied defaults, flag overrides.

The configuration file is a flat JSON object; every key is optional:

    {
      "min_confidence": 0.25,
      "nms_threshold": 0.3,
      "iou_threshold": 0.5,
      "aggregation": "pooled"
    }

Flags override file values; the effective configuration is echoed by the
CLI's --print-config for auditability and into every emitted case score.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .scoring import Aggregation


@dataclass(frozen=True)
class PipelineConfig:
    # The deployment confidence threshold is site configuration; there is no
    # literature-derived default.
    min_confidence: float = 0.25
    nms_threshold: float = 0.3
    iou_threshold: float = 0.5
    aggregation: Aggregation = Aggregation.POOLED

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["aggregation"] = self.aggregation.value
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(doc)
        if "aggregation" in kwargs:
            kwargs["aggregation"] = Aggregation(kwargs["aggregation"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def with_overrides(
        self,
        min_confidence: float | None = None,
        nms_threshold: float | None = None,
        iou_threshold: float | None = None,
        aggregation: Aggregation | str | None = None,
    ) -> "PipelineConfig":
        if isinstance(aggregation, str):
            aggregation = Aggregation(aggregation)
        return PipelineConfig(
            min_confidence=self.min_confidence if min_confidence is None else min_confidence,
            nms_threshold=self.nms_threshold if nms_threshold is None else nms_threshold,
            iou_threshold=self.iou_threshold if iou_threshold is None else iou_threshold,
            aggregation=self.aggregation if aggregation is None else aggregation,
        )
