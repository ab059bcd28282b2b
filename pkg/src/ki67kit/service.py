"""Pathologist review service: browse cases, correct detections, live scores.

Corrections are event-sourced: every edit is appended to a per-case JSONL
log before it is acknowledged, and folding the log over the original model
detections always reproduces the current state. Writes use optimistic
concurrency; a stale base_version is rejected with a conflict so the client
refreshes instead of silently clobbering another reviewer's edit.
"""
from __future__ import annotations

import io
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .augment import RasterImage
from .config import PipelineConfig
from .core import BoundingBox, CellClass, Detection, nms
from .dataset import DatasetManifest
from .errors import (
    IndexOutOfRangeError,
    InvalidBoxError,
    UnknownCaseError,
    UnknownImageError,
    VersionConflictError,
)
from .reporting import OverlayStyle, case_score_to_dict, render_overlay
from .scoring import Aggregation, CaseScore, score_case, score_image


class Provenance:
    MODEL = "model"
    HUMAN = "human"


@dataclass(frozen=True)
class ReviewDetection:
    detection: Detection
    provenance: str  # Provenance.MODEL or Provenance.HUMAN


@dataclass(frozen=True)
class CorrectionAction:
    kind: str  # "toggle" | "delete" | "add"
    index: int | None = None
    box: BoundingBox | None = None
    cls: CellClass | None = None

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.index is not None:
            d["index"] = self.index
        if self.box is not None:
            d["box"] = {
                "x_min": self.box.x_min,
                "y_min": self.box.y_min,
                "x_max": self.box.x_max,
                "y_max": self.box.y_max,
            }
        if self.cls is not None:
            d["cls"] = int(self.cls)
        return d

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CorrectionAction":
        kind = doc.get("kind")
        if kind not in ("toggle", "delete", "add"):
            raise ValueError(f"unknown action kind: {kind!r}")
        index = doc.get("index")
        box = None
        if "box" in doc:
            b = doc["box"]
            try:
                box = BoundingBox(
                    float(b["x_min"]), float(b["y_min"]), float(b["x_max"]), float(b["y_max"])
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidBoxError(f"invalid box: {exc}") from exc
        cell_cls = CellClass(doc["cls"]) if "cls" in doc else None
        if kind in ("toggle", "delete") and index is None:
            raise ValueError(f"{kind} action requires an index")
        if kind == "add" and (box is None or cell_cls is None):
            raise ValueError("add action requires box and cls")
        return cls(kind=kind, index=index, box=box, cls=cell_cls)


@dataclass(frozen=True)
class CorrectionEvent:
    event_id: int
    image_id: str
    action: CorrectionAction
    actor: str
    timestamp: str  # ISO-8601 UTC
    base_version: int

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "image_id": self.image_id,
            "action": self.action.to_dict(),
            "actor": self.actor,
            "timestamp": self.timestamp,
            "base_version": self.base_version,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CorrectionEvent":
        return cls(
            event_id=doc["event_id"],
            image_id=doc["image_id"],
            action=CorrectionAction.from_dict(doc["action"]),
            actor=doc["actor"],
            timestamp=doc["timestamp"],
            base_version=doc["base_version"],
        )


@dataclass(frozen=True)
class ImageReviewState:
    image_id: str
    detections: tuple[ReviewDetection, ...]
    version: int = 0

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "version": self.version,
            "detections": [
                {
                    "index": i,
                    "box": {
                        "x_min": rd.detection.box.x_min,
                        "y_min": rd.detection.box.y_min,
                        "x_max": rd.detection.box.x_max,
                        "y_max": rd.detection.box.y_max,
                    },
                    "cls": int(rd.detection.cls),
                    "confidence": rd.detection.confidence,
                    "provenance": rd.provenance,
                }
                for i, rd in enumerate(self.detections)
            ],
        }


def apply_correction(state: ImageReviewState, event: CorrectionEvent) -> ImageReviewState:
    """Apply one event to a state; pure, so replaying a log is a fold."""
    if event.base_version != state.version:
        raise VersionConflictError(
            f"stale base_version {event.base_version}, image at {state.version}",
            expected=state.version,
            got=event.base_version,
        )
    action = event.action
    detections = list(state.detections)
    if action.kind in ("toggle", "delete"):
        assert action.index is not None
        if not (0 <= action.index < len(detections)):
            raise IndexOutOfRangeError(
                f"index {action.index} out of range for {len(detections)} detections"
            )
    if action.kind == "toggle":
        old = detections[action.index]
        detections[action.index] = ReviewDetection(
            detection=Detection(
                box=old.detection.box,
                cls=old.detection.cls.toggled(),
                confidence=old.detection.confidence,
            ),
            provenance=old.provenance,
        )
    elif action.kind == "delete":
        del detections[action.index]
    elif action.kind == "add":
        assert action.box is not None and action.cls is not None
        # Human-added detections carry confidence 1.0 and are exempt from
        # confidence filtering.
        detections.append(
            ReviewDetection(
                detection=Detection(box=action.box, cls=action.cls, confidence=1.0),
                provenance=Provenance.HUMAN,
            )
        )
    else:  # pragma: no cover - from_dict rejects unknown kinds
        raise ValueError(f"unknown action kind: {action.kind!r}")
    return ImageReviewState(
        image_id=state.image_id, detections=tuple(detections), version=state.version + 1
    )


class ReviewStore:
    """Review states plus the append-only per-case event logs.

    Reads are unrestricted; writes serialize per image. The log append
    happens before the in-memory apply, so an acknowledged correction is
    always recoverable.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        detections_by_image: Mapping[str, Sequence[Detection]],
        config: PipelineConfig,
        log_dir: str | Path,
    ):
        self.manifest = manifest
        self.config = config
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self._states: dict[str, ImageReviewState] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._case_of: dict[str, str] = {}
        self._images_of: dict[str, list[str]] = {}
        for record in manifest.records:
            dets = tuple(
                ReviewDetection(detection=d, provenance=Provenance.MODEL)
                for d in detections_by_image.get(record.image_id, ())
            )
            self._states[record.image_id] = ImageReviewState(
                image_id=record.image_id, detections=dets, version=0
            )
            self._locks[record.image_id] = threading.Lock()
            self._case_of[record.image_id] = record.case_id
            self._images_of.setdefault(record.case_id, []).append(record.image_id)
        self._replay_logs()

    def _log_path(self, case_id: str) -> Path:
        return self.log_dir / f"{case_id}.jsonl"

    def _replay_logs(self) -> None:
        for case_id in self._images_of:
            path = self._log_path(case_id)
            if not path.exists():
                continue
            with path.open(encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    event = CorrectionEvent.from_dict(json.loads(line))
                    state = self._states[event.image_id]
                    self._states[event.image_id] = apply_correction(state, event)

    def case_ids(self) -> list[str]:
        return list(self._images_of)

    def images_of(self, case_id: str) -> list[str]:
        if case_id not in self._images_of:
            raise UnknownCaseError(f"unknown case: {case_id!r}")
        return list(self._images_of[case_id])

    def state(self, image_id: str) -> ImageReviewState:
        if image_id not in self._states:
            raise UnknownImageError(f"unknown image: {image_id!r}")
        return self._states[image_id]

    def submit(
        self, image_id: str, action: CorrectionAction, actor: str, base_version: int
    ) -> ImageReviewState:
        if image_id not in self._states:
            raise UnknownImageError(f"unknown image: {image_id!r}")
        with self._locks[image_id]:
            state = self._states[image_id]
            event = CorrectionEvent(
                event_id=state.version + 1,
                image_id=image_id,
                action=action,
                actor=actor,
                timestamp=datetime.now(timezone.utc).isoformat(),
                base_version=base_version,
            )
            new_state = apply_correction(state, event)  # validates before persisting
            with self._log_path(self._case_of[image_id]).open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(event.to_dict()) + "\n")
                handle.flush()
            self._states[image_id] = new_state
            return new_state

    def recompute_scores(
        self,
        case_id: str,
        min_conf: float | None = None,
        nms_thresh: float | None = None,
        aggregation: Aggregation | None = None,
    ) -> tuple[CaseScore | None, list[str]]:
        """Score a case from its current review states.

        With no what-if parameters this matches the batch pipeline exactly.
        Images left with zero countable detections are excluded from pooling
        and reported in the warnings list; a case with no scorable image
        yields a None score.
        """
        if case_id not in self._images_of:
            raise UnknownCaseError(f"unknown case: {case_id!r}")
        hotspots = []
        warnings: list[str] = []
        for image_id in self._images_of[case_id]:
            rds = list(self._states[image_id].detections)
            if min_conf is not None:
                rds = [
                    rd
                    for rd in rds
                    if rd.provenance == Provenance.HUMAN or rd.detection.confidence >= min_conf
                ]
            dets = [rd.detection for rd in rds]
            if nms_thresh is not None:
                dets = nms(dets, iou_threshold=nms_thresh, class_aware=True)
            if not dets:
                warnings.append(f"image {image_id} has no detections and was excluded from pooling")
                continue
            hotspots.append(score_image(dets, image_id=image_id))
        if not hotspots:
            warnings.append(f"case {case_id} has no scorable images")
            return None, warnings
        mode = aggregation if aggregation is not None else self.config.aggregation
        return score_case(case_id, hotspots, aggregation=mode), warnings


def _score_payload(store: ReviewStore, case_id: str, **kwargs) -> dict:
    score, warnings = store.recompute_scores(case_id, **kwargs)
    return {
        "case_id": case_id,
        "score": case_score_to_dict(score, store.config) if score is not None else None,
        "warnings": warnings,
    }


def create_app(store: ReviewStore, ui_dir: str | Path | None = None):
    """Build the HTTP application over a review store."""
    from fastapi import Body, FastAPI
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="ki67kit review service")

    @app.get("/api/cases")
    def list_cases() -> dict:
        cases = []
        for case_id in store.case_ids():
            payload = _score_payload(store, case_id)
            payload["n_images"] = len(store.images_of(case_id))
            cases.append(payload)
        return {"cases": cases, "config": store.config.to_dict()}

    @app.get("/api/cases/{case_id}")
    def case_detail(case_id: str):
        try:
            image_ids = store.images_of(case_id)
        except UnknownCaseError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        payload = _score_payload(store, case_id)
        payload["images"] = [
            {
                "image_id": image_id,
                "version": store.state(image_id).version,
                "n_detections": len(store.state(image_id).detections),
            }
            for image_id in image_ids
        ]
        return payload

    @app.get("/api/cases/{case_id}/score")
    def what_if_score(
        case_id: str,
        min_conf: float | None = None,
        nms: float | None = None,
        mode: str | None = None,
    ):
        try:
            aggregation = Aggregation(mode) if mode is not None else None
        except ValueError:
            return JSONResponse({"error": f"unknown mode: {mode!r}"}, status_code=400)
        try:
            return _score_payload(
                store, case_id, min_conf=min_conf, nms_thresh=nms, aggregation=aggregation
            )
        except UnknownCaseError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)

    @app.get("/api/images/{image_id}")
    def image_detail(image_id: str):
        try:
            state = store.state(image_id)
        except UnknownImageError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        record = store.manifest.record_by_id(image_id)
        doc = state.to_dict()
        doc.update(case_id=record.case_id, width=record.width, height=record.height)
        return doc

    @app.get("/api/images/{image_id}/raster")
    def image_raster(image_id: str):
        try:
            record = store.manifest.record_by_id(image_id)
        except KeyError:
            return JSONResponse({"error": f"unknown image: {image_id!r}"}, status_code=404)
        data = Path(record.source_path).read_bytes()
        return Response(content=data, media_type="image/png")

    @app.get("/api/images/{image_id}/overlay")
    def image_overlay(image_id: str, confidence: bool = False):
        try:
            state = store.state(image_id)
        except UnknownImageError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        record = store.manifest.record_by_id(image_id)
        img = RasterImage.load(record.source_path)
        style = OverlayStyle(show_confidence=confidence)
        rendered = render_overlay(img, [rd.detection for rd in state.detections], style)
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(rendered.pixels.copy()).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/images/{image_id}/corrections")
    def post_correction(image_id: str, payload: dict = Body(...)):
        try:
            action = CorrectionAction.from_dict(payload.get("action", {}))
            actor = str(payload.get("actor", "anonymous"))
            base_version = int(payload["base_version"])
        except (KeyError, TypeError, ValueError, InvalidBoxError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        try:
            state = store.submit(image_id, action, actor, base_version)
        except UnknownImageError as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        except VersionConflictError as exc:
            return JSONResponse(
                {"error": "version_conflict", "current_version": exc.expected},
                status_code=409,
            )
        except (IndexOutOfRangeError, InvalidBoxError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        case_id = store.manifest.record_by_id(image_id).case_id
        return {"state": state.to_dict(), "case": _score_payload(store, case_id)}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
