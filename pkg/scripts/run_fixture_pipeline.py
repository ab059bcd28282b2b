#!/usr/bin/env python3
"""End-to-end pipeline demo on the synthetic fixture dataset.

Generates the desk-scale dataset, evaluates the perfect and corrupted
predictors, compares them, scores both cases, and renders one overlay.
Everything lands under the given output directory (default ./fixture_run).

Usage: python scripts/run_fixture_pipeline.py [OUT_DIR]
"""
import sys
from pathlib import Path

from ki67kit.cli import main


def run(out_dir: str) -> int:
    out = Path(out_dir)
    fx = out / "dataset"
    steps = [
        ["fixture", "--out", str(fx), "--seed", "7"],
        ["validate", "--manifest", str(fx / "manifest.json")],
        [
            "split",
            "--manifest", str(fx / "manifest.json"),
            "--seed", "1",
            "--out", str(out / "manifest_split.json"),
        ],
        [
            "evaluate",
            "--manifest", str(fx / "manifest.json"),
            "--predictions", str(fx / "predictions" / "perfect.jsonl"),
            "--out", str(out / "report_perfect.json"),
        ],
        [
            "evaluate",
            "--manifest", str(fx / "manifest.json"),
            "--predictions", str(fx / "predictions" / "corrupted.jsonl"),
            "--out", str(out / "report_corrupted.json"),
        ],
        [
            "compare",
            "--reports", str(out / "report_perfect.json"), str(out / "report_corrupted.json"),
        ],
        [
            "score",
            "--manifest", str(fx / "manifest.json"),
            "--predictions", str(fx / "predictions" / "perfect.jsonl"),
            "--all",
            "--out", str(out / "scores"),
        ],
        [
            "render",
            "--manifest", str(fx / "manifest.json"),
            "--predictions", str(fx / "predictions" / "perfect.jsonl"),
            "--image", "caseA_h1",
            "--out", str(out / "caseA_h1_overlay.png"),
        ],
    ]
    for argv in steps:
        print(f"$ ki67kit {' '.join(argv)}", file=sys.stderr)
        code = main(argv)
        if code != 0:
            return code
    print(f"\nArtifacts under {out}/", file=sys.stderr)
    print(
        f"Next: ki67kit serve --manifest {fx / 'manifest.json'} "
        f"--predictions {fx / 'predictions' / 'perfect.jsonl'} "
        f"--log-dir {out / 'logs'} --port 8080",
        file=sys.stderr,
    )
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else "fixture_run"))
