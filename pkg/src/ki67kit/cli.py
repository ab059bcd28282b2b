"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation errors, 2 usage errors. Diagnostics go
to stderr; data goes to files or stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import augment as augment_mod
from . import fixture as fixture_mod
from .config import PipelineConfig
from .dataset import (
    AnnotationSet,
    DatasetManifest,
    ImageRecord,
    Severity,
    Split,
    SplitSpec,
    parse_rect_annotations,
    read_yolo_file,
    split_dataset,
    split_sizes,
    subset_ids,
    validate_manifest,
)
from .errors import Ki67KitError
from .evaluation import EvaluationReport, compare_runs, evaluate_run
from .predictions import load_predictions, postprocess
from .reporting import OverlayStyle, emit_case_report, render_overlay
from .scoring import score_case, score_image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _effective_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    return config.with_overrides(
        min_confidence=getattr(args, "min_conf", None),
        nms_threshold=getattr(args, "nms", None),
        iou_threshold=getattr(args, "iou", None),
        aggregation=getattr(args, "aggregation", None),
    )


def _report_findings(findings) -> int:
    errors = 0
    for f in findings:
        _err(f"{f.severity.value.upper()}: {f.image_id}: {f.message}")
        if f.severity is Severity.ERROR:
            errors += 1
    return errors


def _load_postprocessed(args: argparse.Namespace, config: PipelineConfig):
    pset, issues = load_predictions(
        args.predictions,
        run_label=getattr(args, "label", None),
        post_nms=getattr(args, "post_nms", False),
    )
    for issue in issues:
        _err(f"predictions line {issue.line_number}: {issue.kind}: {issue.message}")
    return pset, postprocess(pset, config.min_confidence, config.nms_threshold)


def cmd_ingest(args: argparse.Namespace) -> int:
    images_dir = Path(args.images)
    ann_dir = Path(args.annotations)
    from PIL import Image

    records: list[ImageRecord] = []
    annotations: dict[str, AnnotationSet] = {}
    image_paths = sorted(
        p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if not image_paths:
        _err(f"no images found in {images_dir}")
        return 1
    for path in image_paths:
        stem = path.stem
        with Image.open(path) as im:
            width, height = im.size
        case_id = stem.split("_")[0]
        records.append(
            ImageRecord(
                image_id=stem,
                case_id=case_id,
                width=width,
                height=height,
                source_path=str(path),
            )
        )
        if args.format == "rect-json":
            ann_path = ann_dir / f"{stem}.json"
            if ann_path.exists():
                doc = json.loads(ann_path.read_text(encoding="utf-8"))
                ann = parse_rect_annotations(doc)
                annotations[stem] = AnnotationSet(image_id=stem, truths=ann.truths)
        else:
            ann_path = ann_dir / f"{stem}.txt"
            if ann_path.exists():
                truths = read_yolo_file(ann_path.read_text(encoding="utf-8"), width, height)
                annotations[stem] = AnnotationSet(image_id=stem, truths=tuple(truths))
        if stem not in annotations:
            _err(f"warning: no annotation file for {stem}")

    manifest = DatasetManifest(records=records, annotations=annotations)
    errors = _report_findings(
        f for f in validate_manifest(manifest) if f.severity is Severity.ERROR
    )
    if errors:
        return 1
    manifest.save(args.out)
    _err(f"wrote manifest with {len(records)} records to {args.out}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    manifest = DatasetManifest.load(args.manifest)
    findings = validate_manifest(manifest)
    errors = _report_findings(findings)
    if not findings:
        _err("manifest is clean")
    return 1 if errors else 0


def cmd_split(args: argparse.Namespace) -> int:
    manifest = DatasetManifest.load(args.manifest)
    counts = None
    if args.counts:
        parts = args.counts.split(",")
        if len(parts) != 3:
            _err(f"--counts expects three comma-separated integers, got {args.counts!r}")
            return 2
        counts = tuple(int(p) for p in parts)
    spec = SplitSpec(
        fractions=None if counts else (args.train, args.val, args.test),
        counts=counts,
        seed=args.seed,
        group_by_case=args.by_case,
    )
    result = split_dataset(manifest, spec, overwrite=args.overwrite)
    result.save(args.out or args.manifest)
    sizes = split_sizes(result)
    _err(
        f"split: train={sizes[Split.TRAIN]} val={sizes[Split.VAL]} test={sizes[Split.TEST]}"
    )
    return 0


def cmd_augment(args: argparse.Namespace) -> int:
    manifest = DatasetManifest.load(args.manifest)
    plan = augment_mod.generate_plan(manifest, seed=args.seed, target_total=args.target)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    plan.save(Path(args.out_dir) / "plan.json")
    result, issues = augment_mod.execute_plan(manifest, plan, args.out_dir)
    for issue in issues:
        _err(f"augment {issue.new_id}: {issue.message}")
    result.save(args.out or args.manifest)
    _err(f"augmented to {len(result.records)} records ({len(plan.entries)} new)")
    return 1 if issues else 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    manifest = DatasetManifest.load(args.manifest)
    pset, detections = _load_postprocessed(args, config)
    ids = subset_ids(manifest, Split(args.split) if args.split else None)
    report = evaluate_run(
        detections,
        manifest,
        image_ids=ids,
        iou_thresh=config.iou_threshold,
        run_label=pset.run_label,
    )
    report.save(args.out)
    if args.pr_csv:
        from .core import CellClass
        from .evaluation import match_image, pr_curve, pr_curve_to_csv

        out_dir = Path(args.pr_csv)
        out_dir.mkdir(parents=True, exist_ok=True)
        outcomes = [
            match_image(
                list(detections.get(i, ())), list(manifest.truths_for(i)),
                iou_thresh=config.iou_threshold, image_id=i,
            )
            for i in ids
        ]
        for cls in CellClass:
            if report.per_class[cls].n_truth == 0:
                continue
            csv_path = out_dir / f"{report.run_label}_{cls.name.lower()}.csv"
            csv_path.write_text(pr_curve_to_csv(pr_curve(outcomes, cls)), encoding="utf-8")
    _err(f"{report.run_label}: mAP50={report.map50:.4f} over {len(ids)} images")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    reports = [EvaluationReport.load(p) for p in args.reports]
    table = compare_runs(reports)
    sys.stdout.write(table.to_text())
    if args.json:
        _write_json(args.json, table.to_dict())
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    manifest = DatasetManifest.load(args.manifest)
    _, detections = _load_postprocessed(args, config)
    case_ids = manifest.case_ids() if args.all else [args.case]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for case_id in case_ids:
        image_ids = [r.image_id for r in manifest.records if r.case_id == case_id]
        if not image_ids:
            _err(f"unknown case: {case_id!r}")
            return 1
        hotspots = []
        for image_id in image_ids:
            dets = detections.get(image_id, [])
            if not dets:
                _err(f"warning: image {image_id} has no detections and was excluded from pooling")
                continue
            hotspots.append(score_image(dets, image_id=image_id))
        if not hotspots:
            _err(f"warning: case {case_id} has no scorable images, skipped")
            continue
        score = score_case(case_id, hotspots, aggregation=config.aggregation)
        doc, text = emit_case_report(score, config)
        _write_json(out_dir / f"{case_id}.json", doc)
        (out_dir / f"{case_id}.txt").write_text(text, encoding="utf-8")
        _err(f"{case_id}: index={score.index_percent:.2f}% band={score.band.value}")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    config = _effective_config(args)
    manifest = DatasetManifest.load(args.manifest)
    _, detections = _load_postprocessed(args, config)
    record = manifest.record_by_id(args.image)
    img = augment_mod.RasterImage.load(record.source_path)
    style = OverlayStyle(show_confidence=args.show_confidence)
    rendered = render_overlay(img, detections.get(args.image, []), style)
    rendered.save(args.out)
    _err(f"wrote overlay for {args.image} to {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ReviewStore, create_app

    config = _effective_config(args)
    manifest = DatasetManifest.load(args.manifest)
    _, detections = _load_postprocessed(args, config)
    store = ReviewStore(manifest, detections, config, args.log_dir)
    app = create_app(store, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_fixture(args: argparse.Namespace) -> int:
    summary = fixture_mod.generate_fixture(args.out, seed=args.seed)
    _err(
        f"fixture: {summary.n_images} images, truths {summary.n_truths}, "
        f"manifest {summary.manifest_path}"
    )
    return 0


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file supplying defaults")
    p.add_argument(
        "--print-config",
        action="store_true",
        help="print the effective configuration to stdout and exit",
    )


def _add_threshold_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-conf", type=float, default=None, help="confidence threshold")
    p.add_argument("--nms", type=float, default=None, help="NMS IoU threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ki67kit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a manifest from images and annotations")
    p.add_argument("--images", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--format", choices=("rect-json", "yolo"), default="rect-json")
    p.add_argument("--out", required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("validate", help="scan a manifest for structural problems")
    p.add_argument("--manifest", required=True)
    _add_config_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("split", help="assign train/val/test deterministically")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train", type=float, default=0.8)
    p.add_argument("--val", type=float, default=0.1)
    p.add_argument("--test", type=float, default=0.1)
    p.add_argument("--counts", help="explicit train,val,test counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--by-case", action="store_true")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--out", help="output manifest path (default: in place)")
    _add_config_args(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", help="expand the dataset with deterministic transforms")
    p.add_argument("--manifest", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--out", help="output manifest path (default: in place)")
    _add_config_args(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="evaluate a prediction set (AP50/mAP50)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--split", choices=[s.value for s in Split])
    p.add_argument("--iou", type=float, default=None)
    p.add_argument("--label", help="run label (default: predictions filename stem)")
    p.add_argument("--post-nms", action="store_true", help="predictions are already suppressed")
    p.add_argument("--out", required=True)
    p.add_argument("--pr-csv", help="directory for per-class PR-curve CSV exports")
    _add_threshold_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="rank evaluation reports by mAP50")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--json", help="also write the table as JSON")
    _add_config_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("score", help="compute clinical case scores")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--case")
    group.add_argument("--all", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--post-nms", action="store_true")
    p.add_argument("--aggregation", choices=("pooled", "mean"), default=None)
    _add_threshold_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("render", help="write a detection overlay PNG")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--show-confidence", action="store_true")
    p.add_argument("--post-nms", action="store_true")
    _add_threshold_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("serve", help="run the pathologist review service")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--log-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--ui-dir", help="static directory with the review UI bundle")
    p.add_argument("--post-nms", action="store_true")
    p.add_argument("--aggregation", choices=("pooled", "mean"), default=None)
    _add_threshold_args(p)
    _add_config_args(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fixture", help="generate the synthetic desk-scale dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    _add_config_args(p)
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "print_config", False):
        print(json.dumps(_effective_config(args).to_dict(), indent=2, sort_keys=True))
        return 0
    try:
        return args.func(args)
    except Ki67KitError as exc:
        _err(f"error: {exc}")
        return 1
    except (OSError, KeyError, ValueError) as exc:
        _err(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
