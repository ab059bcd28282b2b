import json

import numpy as np
import pytest

from ki67kit.augment import RasterImage
from ki67kit.config import PipelineConfig
from ki67kit.core import BoundingBox, CellClass, Detection
from ki67kit.reporting import (
    OverlayStyle,
    case_score_from_dict,
    case_score_to_dict,
    emit_case_report,
    render_case_report_text,
    render_overlay,
)
from ki67kit.scoring import HotspotScore, ki67_index, score_case


def gray_image(width=64, height=48, value=120):
    return RasterImage(np.full((height, width, 3), value, dtype=np.uint8))


def det(x0, y0, x1, y1, cls=CellClass.POSITIVE, conf=0.9):
    return Detection(BoundingBox(x0, y0, x1, y1), cls, conf)


def sample_case_score():
    hotspots = [
        HotspotScore("caseA_h1", 80, 20, ki67_index(80, 20)),
        HotspotScore("caseA_h2", 40, 60, ki67_index(40, 60)),
    ]
    return score_case("caseA", hotspots)


class TestRenderOverlay:
    def test_no_detections_is_identity(self):
        img = gray_image()
        out = render_overlay(img, [])
        assert np.array_equal(out.pixels, img.pixels)

    def test_stroke_pixels_exactly_ring(self):
        img = gray_image()
        out = render_overlay(img, [det(10, 10, 30, 25)])
        diff = np.any(out.pixels != img.pixels, axis=2)
        w, h, s = 20, 15, 2
        ring_area = w * h - (w - 2 * s) * (h - 2 * s)
        assert int(diff.sum()) == ring_area
        changed = out.pixels[diff]
        assert np.all(changed == np.array([255, 0, 0]))

    def test_negative_class_color(self):
        img = gray_image()
        out = render_overlay(img, [det(5, 5, 15, 15, CellClass.NEGATIVE)])
        diff = np.any(out.pixels != img.pixels, axis=2)
        assert np.all(out.pixels[diff] == np.array([0, 255, 0]))

    def test_draw_order_later_on_top(self):
        img = gray_image()
        pos = det(10, 10, 30, 30, CellClass.POSITIVE)
        neg = det(10, 10, 30, 30, CellClass.NEGATIVE)
        out = render_overlay(img, [pos, neg])
        # both rings coincide; the negative (drawn later) wins
        assert tuple(out.pixels[10, 10]) == (0, 255, 0)
        out2 = render_overlay(img, [neg, pos])
        assert tuple(out2.pixels[10, 10]) == (255, 0, 0)

    def test_idempotent_re_render(self):
        img = gray_image()
        dets = [det(4, 4, 20, 18), det(30, 10, 50, 40, CellClass.NEGATIVE, 0.5)]
        once = render_overlay(img, dets)
        twice = render_overlay(once, dets)
        assert np.array_equal(once.pixels, twice.pixels)

    def test_overhanging_box_clamped_with_warning(self, caplog):
        import logging

        img = gray_image(width=32, height=32)
        with caplog.at_level(logging.WARNING):
            out = render_overlay(img, [det(28, 28, 40, 40)])
        assert any("clamped" in r.message for r in caplog.records)
        assert out.pixels.shape == img.pixels.shape

    def test_confidence_labels_add_pixels(self):
        img = gray_image(width=128, height=64)
        plain = render_overlay(img, [det(10, 10, 90, 50)])
        labeled = render_overlay(
            img, [det(10, 10, 90, 50)], OverlayStyle(show_confidence=True)
        )
        assert (plain.pixels != labeled.pixels).any()

    def test_stroke_width_validation(self):
        with pytest.raises(ValueError):
            OverlayStyle(stroke_width=0)


class TestCaseReport:
    def test_json_round_trip_reproduces_score(self):
        score = sample_case_score()
        doc = case_score_to_dict(score, PipelineConfig())
        # through real JSON text, as a consumer would see it
        recovered = case_score_from_dict(json.loads(json.dumps(doc)))
        assert recovered == score

    def test_text_contains_band_and_adequacy(self):
        score = sample_case_score()
        text = render_case_report_text(score, PipelineConfig())
        assert f"band: {score.band.value}" in text
        assert "adequate: no" in text  # 200 cells < 500
        assert "60.00%" in text

    def test_config_echo_present(self):
        doc = case_score_to_dict(sample_case_score(), PipelineConfig(min_confidence=0.4))
        assert doc["config"]["min_confidence"] == 0.4
        assert doc["config"]["nms_threshold"] == 0.3

    def test_missing_evaluation_section_omitted(self):
        doc, _ = emit_case_report(sample_case_score(), PipelineConfig())
        assert "evaluation" not in doc

    def test_evaluation_section_included_when_given(self):
        from ki67kit.dataset import AnnotationSet, DatasetManifest, ImageRecord
        from ki67kit.core import GroundTruth
        from ki67kit.evaluation import evaluate_run

        manifest = DatasetManifest(
            records=[ImageRecord("a", "caseA", 640, 640, "a.png")],
            annotations={
                "a": AnnotationSet("a", (GroundTruth(BoundingBox(0, 0, 10, 10), CellClass.POSITIVE),))
            },
        )
        report = evaluate_run({"a": [det(0, 0, 10, 10)]}, manifest, run_label="fix")
        doc, text = emit_case_report(sample_case_score(), PipelineConfig(), report)
        assert doc["evaluation"]["run_label"] == "fix"
        assert "mAP50" in text
