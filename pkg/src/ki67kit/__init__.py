"""Ki-67 quantification toolkit.

Ingests annotated IHC hotspot images and external detector predictions,
applies confidence filtering and class-aware NMS, evaluates detections at
IoU 0.5 (AP50/mAP50), computes clinically banded proliferation indices, and
serves a pathologist review workflow with an auditable correction log.
"""
from .core import BoundingBox, CellClass, Detection, GroundTruth, filter_confidence, iou, nms

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "CellClass",
    "Detection",
    "GroundTruth",
    "filter_confidence",
    "iou",
    "nms",
    "__version__",
]
