"""Acceptance gate: one test per release criterion, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -s` to see one PASS line per
criterion.
"""
import json
import time

import numpy as np
import pytest

from ki67kit.augment import (
    Crop,
    HFlip,
    RasterImage,
    Rot90CCW,
    Rot90CW,
    Rot180,
    VFlip,
    apply_transform,
    generate_plan,
)
from ki67kit.cli import main
from ki67kit.core import BoundingBox, CellClass, Detection, GroundTruth, nms
from ki67kit.dataset import (
    AnnotationSet,
    DatasetManifest,
    ImageRecord,
    Split,
    SplitSpec,
    split_dataset,
    split_sizes,
)
from ki67kit.evaluation import average_precision, evaluate_run, match_image, pr_curve
from ki67kit.scoring import ClinicalBand, classify_band, ki67_index, score_case, HotspotScore
from oracles import (
    brute_force_nms,
    matching_instance,
    naive_average_precision,
    oracle_box_map,
    oracle_hflip,
    oracle_rot90ccw,
    oracle_rot90cw,
    oracle_rot180,
    oracle_vflip,
    random_detections,
)


def _pass(name: str) -> None:
    print(f"ACCEPTANCE PASS: {name}")


def truth(x0, y0, x1, y1, cls=CellClass.POSITIVE):
    return GroundTruth(BoundingBox(x0, y0, x1, y1), cls)


def det(x0, y0, x1, y1, cls=CellClass.POSITIVE, conf=0.9):
    return Detection(BoundingBox(x0, y0, x1, y1), cls, conf)


def test_nms_oracle_equivalence():
    """500 random instances, <= 8 boxes: greedy equals brute force, < 5 s."""
    rng = np.random.default_rng(52001)
    started = time.perf_counter()
    for _ in range(500):
        dets = random_detections(rng, int(rng.integers(0, 9)), max_size=300.0)
        assert nms(dets, 0.3) == brute_force_nms(dets, 0.3)
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, f"took {elapsed:.2f}s"
    _pass(f"NMS oracle equivalence (500 instances in {elapsed:.2f}s)")


def test_ap_correctness():
    """Hand case 5/6; 500 random instances vs naive reference within 1e-9;
    perfect predictor exactly 1; silent predictor exactly 0."""
    # hand case: TP @0.9, FP @0.8, TP @0.7 over two truths
    truths = [truth(0, 0, 10, 10), truth(20, 20, 30, 30)]
    dets = [
        det(0, 0, 10, 10, conf=0.9),
        det(100, 100, 110, 110, conf=0.8),
        det(20, 20, 30, 30, conf=0.7),
    ]
    curve = pr_curve([match_image(dets, truths, 0.5)], CellClass.POSITIVE)
    assert abs(average_precision(curve) - 5 / 6) < 1e-9

    rng = np.random.default_rng(52002)
    compared = 0
    for _ in range(500):
        idets, itruths = matching_instance(rng)
        outcome = match_image(idets, itruths, 0.5)
        for cls in CellClass:
            if outcome.per_class[cls].n_truth == 0:
                continue
            icurve = pr_curve([outcome], cls)
            assert abs(average_precision(icurve) - naive_average_precision(icurve)) < 1e-9
            compared += 1
    assert compared >= 500

    perfect_curve = pr_curve(
        [match_image([det(0, 0, 10, 10, conf=0.9), det(20, 20, 30, 30, conf=0.8)], truths, 0.5)],
        CellClass.POSITIVE,
    )
    assert average_precision(perfect_curve) == 1.0
    silent_curve = pr_curve([match_image([], truths, 0.5)], CellClass.POSITIVE)
    assert average_precision(silent_curve) == 0.0
    _pass(f"AP correctness (hand case 5/6, {compared} reference comparisons, exact endpoints)")


def test_matching_conservation():
    """tp+fn == truth count and tp+fp == detection count on every instance."""
    rng = np.random.default_rng(52003)
    violations = 0
    for _ in range(1000):
        dets, truths = matching_instance(rng, max_truths=6, max_dets=6)
        outcome = match_image(dets, truths, 0.5)
        for cls in CellClass:
            m = outcome.per_class[cls]
            if m.tp + m.fn != sum(1 for t in truths if t.cls is cls):
                violations += 1
            if m.tp + m.fp != sum(1 for d in dets if d.cls is cls):
                violations += 1
    assert violations == 0
    _pass("matching conservation (1000 instances, zero violations)")


def test_augmentation_exactness():
    """Geometric transforms equal the per-pixel oracle bit-exactly at
    640x640; double flips identical to input; crop draws within [0, 0.08]."""
    rng = np.random.default_rng(52004)
    px = rng.integers(0, 256, size=(640, 640, 3), dtype=np.uint8)
    img = RasterImage(px)
    truths = [truth(10, 20, 110, 120), truth(300.5, 200.25, 420.5, 330.75, CellClass.NEGATIVE)]
    oracles = {
        "hflip": (HFlip(), oracle_hflip),
        "vflip": (VFlip(), oracle_vflip),
        "rot90cw": (Rot90CW(), oracle_rot90cw),
        "rot90ccw": (Rot90CCW(), oracle_rot90ccw),
        "rot180": (Rot180(), oracle_rot180),
    }
    for kind, (transform, pixel_oracle) in oracles.items():
        out_img, out_boxes = apply_transform(img, truths, transform)
        assert np.array_equal(out_img.pixels, pixel_oracle(px)), kind
        for got, src in zip(out_boxes, truths):
            assert got.box == oracle_box_map(src.box, kind, 640, 640), kind

    for transform in (HFlip(), Rot180()):
        once_img, once_boxes = apply_transform(img, truths, transform)
        twice_img, twice_boxes = apply_transform(once_img, once_boxes, transform)
        assert np.array_equal(twice_img.pixels, px)
        assert twice_boxes == truths

    records = [ImageRecord(f"img{i:03d}", "c", 640, 640, "x.png") for i in range(200)]
    plan = generate_plan(DatasetManifest(records=records), seed=52005, target_total=20200)
    fractions = [
        f
        for e in plan.entries
        for t in e.transforms
        if isinstance(t, Crop)
        for f in (t.left_frac, t.top_frac, t.right_frac, t.bottom_frac)
    ]
    assert len(fractions) >= 10_000
    assert all(0.0 <= f <= 0.08 for f in fractions)
    _pass(
        f"augmentation exactness (5 oracles bit-exact at 640x640, "
        f"{len(fractions)} crop fractions within bound)"
    )


def test_dataset_reproduction():
    """Counts 1556/200/107 over a 1,863-image pool; determinism; no leakage."""
    records = [
        ImageRecord(f"img{i:04d}", f"case{i % 30:02d}", 640, 640, f"{i}.png")
        for i in range(1863)
    ]
    annotations = {
        r.image_id: AnnotationSet(r.image_id, (truth(1, 1, 5, 5),)) for r in records
    }
    m = DatasetManifest(records=records, annotations=annotations)
    spec = SplitSpec(fractions=None, counts=(1556, 200, 107), seed=8)
    out = split_dataset(m, spec)
    sizes = split_sizes(out)
    assert (sizes[Split.TRAIN], sizes[Split.VAL], sizes[Split.TEST]) == (1556, 200, 107)
    again = split_dataset(m, spec)
    assert out.split == again.split

    # default (fraction) mode over a lineage-tracked manifest: no leakage
    base = [ImageRecord(f"b{i:03d}", f"case{i % 10}", 640, 640, f"{i}.png") for i in range(100)]
    children = [
        ImageRecord(f"b{i:03d}_aug{k}", f"case{i % 10}", 640, 640, "x.png", parent_id=f"b{i:03d}")
        for i in range(100)
        for k in range(3)
    ]
    annotated = {
        r.image_id: AnnotationSet(r.image_id, (truth(1, 1, 5, 5),)) for r in base + children
    }
    lineage = DatasetManifest(records=base + children, annotations=annotated)
    split = split_dataset(lineage, SplitSpec(seed=3))
    straddlers = [
        r.image_id
        for r in split.records
        if r.parent_id is not None and split.split[r.image_id] is not split.split[r.parent_id]
    ]
    assert straddlers == []
    _pass("dataset reproduction (1556/200/107 exact, bit-identical reruns, zero leakage)")


def test_scoring_criteria():
    """Published-count index, band boundaries, pooling, adequacy threshold."""
    assert abs(ki67_index(27653, 4743) - 85.36) <= 0.01
    assert classify_band(4.99) is ClinicalBand.LOW
    assert classify_band(5.0) is ClinicalBand.INTERMEDIATE
    assert classify_band(30.0) is ClinicalBand.INTERMEDIATE
    assert classify_band(30.01) is ClinicalBand.HIGH

    def hotspot(p, n, image_id="h"):
        return HotspotScore(image_id, p, n, ki67_index(p, n))

    pooled = score_case("c", [hotspot(80, 20), hotspot(40, 60)])
    assert pooled.index_percent == 60.0

    assert score_case("c", [hotspot(400, 99)]).adequate is False
    assert score_case("c", [hotspot(400, 100)]).adequate is True
    _pass("scoring (85.36 index, band boundaries, pooled 60.0, 500-cell adequacy)")


def test_end_to_end_fixture(tmp_path):
    """Fixture dataset; perfect predictor mAP50 = 1.0 through the CLI;
    corrupted predictor recall 0.800 +/- 0.001 per class; < 30 s."""
    started = time.perf_counter()
    fx = tmp_path / "fx"
    assert main(["fixture", "--out", str(fx), "--seed", "7"]) == 0

    manifest = DatasetManifest.load(fx / "manifest.json")
    assert len(manifest.records) == 12
    assert len({r.case_id for r in manifest.records}) == 2

    perfect_report = tmp_path / "perfect.json"
    assert main(
        [
            "evaluate",
            "--manifest", str(fx / "manifest.json"),
            "--predictions", str(fx / "predictions" / "perfect.jsonl"),
            "--out", str(perfect_report),
        ]
    ) == 0
    report = json.loads(perfect_report.read_text())
    assert report["map50"] == 1.0

    corrupted_report = tmp_path / "corrupted.json"
    assert main(
        [
            "evaluate",
            "--manifest", str(fx / "manifest.json"),
            "--predictions", str(fx / "predictions" / "corrupted.jsonl"),
            "--out", str(corrupted_report),
        ]
    ) == 0
    corrupted = json.loads(corrupted_report.read_text())
    for cls_name in ("positive", "negative"):
        assert abs(corrupted["per_class"][cls_name]["recall"] - 0.800) <= 0.001, cls_name

    assert main(
        [
            "score",
            "--manifest", str(fx / "manifest.json"),
            "--predictions", str(fx / "predictions" / "perfect.jsonl"),
            "--all",
            "--out", str(tmp_path / "scores"),
        ]
    ) == 0
    assert main(
        [
            "render",
            "--manifest", str(fx / "manifest.json"),
            "--predictions", str(fx / "predictions" / "perfect.jsonl"),
            "--image", "caseA_h1",
            "--out", str(tmp_path / "overlay.png"),
        ]
    ) == 0
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"pipeline took {elapsed:.1f}s"
    _pass(f"end-to-end fixture (mAP50 1.0, recall 0.800 both classes, {elapsed:.1f}s)")


def test_service_determinism(tmp_path):
    """Replay reproduces state byte-identically; zero-correction serve equals
    batch score byte-for-byte; racing corrections give one 200 and one 409."""
    from concurrent.futures import ThreadPoolExecutor

    from fastapi.testclient import TestClient

    from ki67kit.config import PipelineConfig
    from ki67kit.predictions import load_predictions, postprocess
    from ki67kit.service import CorrectionAction, ReviewStore, create_app

    fx = tmp_path / "fx"
    assert main(["fixture", "--out", str(fx), "--seed", "7"]) == 0
    scores_dir = tmp_path / "scores"
    assert main(
        [
            "score",
            "--manifest", str(fx / "manifest.json"),
            "--predictions", str(fx / "predictions" / "perfect.jsonl"),
            "--all",
            "--out", str(scores_dir),
        ]
    ) == 0

    manifest = DatasetManifest.load(fx / "manifest.json")
    config = PipelineConfig()
    pset, issues = load_predictions(fx / "predictions" / "perfect.jsonl")
    assert issues == []
    detections = postprocess(pset, config.min_confidence, config.nms_threshold)

    log_dir = tmp_path / "logs"
    store = ReviewStore(manifest, detections, config, log_dir)

    # zero-correction service scores == batch score files, byte for byte
    client = TestClient(create_app(store))
    for case_id in ("caseA", "caseB"):
        live = client.get(f"/api/cases/{case_id}/score").json()["score"]
        live_bytes = (json.dumps(live, indent=2, sort_keys=True) + "\n").encode()
        file_bytes = (scores_dir / f"{case_id}.json").read_bytes()
        assert live_bytes == file_bytes, case_id

    # event-log replay reproduces states byte-identically
    store.submit("caseA_h1", CorrectionAction("toggle", index=0), "dr", 0)
    store.submit("caseA_h1", CorrectionAction("delete", index=5), "dr", 1)
    store.submit(
        "caseA_h2",
        CorrectionAction("add", box=BoundingBox(5, 5, 25, 25), cls=CellClass.NEGATIVE),
        "dr",
        0,
    )
    snapshot = {
        image_id: json.dumps(store.state(image_id).to_dict(), sort_keys=True).encode()
        for image_id in manifest.image_ids()
    }
    rebuilt = ReviewStore(manifest, detections, config, log_dir)
    for image_id, expected in snapshot.items():
        got = json.dumps(rebuilt.state(image_id).to_dict(), sort_keys=True).encode()
        assert got == expected, image_id

    # racing corrections: exactly one 200 and one 409
    payload = {"action": {"kind": "toggle", "index": 0}, "actor": "dr", "base_version": 0}

    def fire(_):
        return client.post("/api/images/caseB_h1/corrections", json=payload).status_code

    with ThreadPoolExecutor(max_workers=2) as pool:
        statuses = sorted(pool.map(fire, range(2)))
    assert statuses == [200, 409]
    _pass("service determinism (byte-identical replay, serve == score, race 200/409)")
