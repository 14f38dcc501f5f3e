#!/usr/bin/env python3
"""Run the typical-vs-fair comparison on the public benchmark datasets.

This script:
1. Downloads FLC and COMPAS into the data directory (cached after the first run)
2. Runs `faircox compare` on each with its bundled schema
3. Prints a short summary of the qualitative checks on the comparison table

Usage:
    uv run python scripts/run_benchmarks.py --out runs/benchmarks

    # Only FLC, with a coarser grid
    uv run python scripts/run_benchmarks.py --datasets flc --grid 0.1,1,10
"""
import argparse
import json
import sys
from pathlib import Path

from faircox.cli import MODEL_NAMES, main
from faircox.data import DatasetFetcher, bundled_schema_path
from faircox.fairness import PenaltyKind
from faircox.settings import Settings

MEASURE_FOR_MODEL = {
    MODEL_NAMES[PenaltyKind.INDIVIDUAL]: "F_i",
    MODEL_NAMES[PenaltyKind.GROUP]: "F_g",
    MODEL_NAMES[PenaltyKind.INTERSECTIONAL]: "F_eps",
}


def summarize(comparison_path: Path) -> list[str]:
    """Check each fair model against typical CPH on its own measure."""
    models = json.loads(comparison_path.read_text())["models"]
    typical = models[MODEL_NAMES[None]]
    lines = []
    best_train = max(models, key=lambda name: models[name]["train"]["c_index"])
    lines.append(f"  best train C-index: {best_train}")
    for name, measure in MEASURE_FOR_MODEL.items():
        fair, base = models[name]["test"][measure], typical["test"][measure]
        verdict = "fairer" if fair <= base else "NOT fairer"
        lines.append(
            f"  {name} (lambda={models[name]['lambda']:g}): test {measure} "
            f"{fair:.4f} vs {base:.4f} -> {verdict}"
        )
    return lines


def run_dataset(name: str, fetcher: DatasetFetcher, out: Path, extra: list[str]) -> int:
    print(f"\n=== {name} ===")
    csv_path = fetcher.fetch(name)
    run_dir = out / name
    code = main([
        "compare",
        "--dataset", str(csv_path),
        "--schema", str(bundled_schema_path(name)),
        "--out", str(run_dir),
        *extra,
    ])
    if code == 0:
        for line in summarize(run_dir / "comparison.json"):
            print(line)
    return code


def main_cli() -> int:
    parser = argparse.ArgumentParser(description="Benchmark typical CPH against fair CPH models")
    parser.add_argument("--datasets", default="flc,compas", help="comma-separated dataset names")
    parser.add_argument("--out", default="runs/benchmarks", help="output directory")
    parser.add_argument("--grid", help="comma-separated lambda grid")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    settings = Settings.from_env()
    fetcher = DatasetFetcher(settings.data_dir, timeout=settings.http_timeout)
    extra = ["--seed", str(args.seed)]
    if args.grid:
        extra += ["--grid", args.grid]

    failures = 0
    for name in (n.strip() for n in args.datasets.split(",") if n.strip()):
        if run_dataset(name, fetcher, Path(args.out), extra) != 0:
            failures += 1
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main_cli())
