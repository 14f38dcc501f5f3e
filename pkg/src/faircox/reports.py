"""Model files and report tables.

Model file (version 1) is tab-separated text, one record per line:

    faircox-model<TAB>1
    feature<TAB><name><TAB><mean><TAB><scale><TAB><beta>

Numbers are written with Python's shortest round-trip representation, so a
file read back reproduces the model bit for bit. Report files follow the same
rule; the console table rounds to four decimals.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from faircox.errors import DataError
from faircox.metrics import METRIC_FIELDS, MetricReport
from faircox.selection import SweepResult
from faircox.survival.models import CoxModel

MODEL_MAGIC = "faircox-model"
MODEL_VERSION = 1
SWEEP_COLUMNS = ("lambda", "c_index_dev", "F_i", "F_g", "F_eps", "selected", "baseline")
COMPARISON_COLUMNS = ("model", "split", "lambda", *METRIC_FIELDS)
ACCURACY_FIELDS = ("c_index", "brier", "auc", "log_partial_likelihood")


def _number(value: float) -> str:
    return repr(float(value))


def write_model(model: CoxModel, path: str | Path) -> Path:
    path = Path(path)
    lines = [f"{MODEL_MAGIC}\t{MODEL_VERSION}"]
    for name, mean, scale, beta in zip(
        model.feature_names, model.feature_means, model.feature_scales, model.beta
    ):
        if "\t" in name or "\n" in name:
            raise DataError(f"feature name {name!r} cannot be stored in a model file")
        lines.append(f"feature\t{name}\t{_number(mean)}\t{_number(scale)}\t{_number(beta)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_model(path: str | Path) -> CoxModel:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split("\t")[0] != MODEL_MAGIC:
        raise DataError(f"{path} is not a faircox model file")
    version = lines[0].split("\t")[1] if "\t" in lines[0] else ""
    if version != str(MODEL_VERSION):
        raise DataError(f"{path}: unsupported model file version {version!r}")
    names, means, scales, betas = [], [], [], []
    for number, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 5 or fields[0] != "feature":
            raise DataError(f"{path}: malformed line {number}")
        names.append(fields[1])
        means.append(float(fields[2]))
        scales.append(float(fields[3]))
        betas.append(float(fields[4]))
    return CoxModel(np.array(betas), np.array(means), np.array(scales), tuple(names))


def _dump_json(data: Any, path: Path) -> Path:
    path.write_text(json.dumps(data, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def write_metric_report(
    report: MetricReport, out_dir: str | Path, formats: Iterable[str], split: str = "test"
) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    row = {"split": split, **report.to_dict()}
    if "json" in formats:
        written.append(_dump_json(row, out_dir / "metrics.json"))
    if "csv" in formats:
        path = out_dir / "metrics.csv"
        pd.DataFrame([row]).to_csv(path, index=False)
        written.append(path)
    return written


def read_metric_report(path: str | Path) -> MetricReport:
    path = Path(path)
    if path.suffix == ".json":
        return MetricReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
    frame = pd.read_csv(path, float_precision="round_trip")
    return MetricReport.from_dict(frame.iloc[0].to_dict())


def sweep_rows(sweep: SweepResult) -> list[dict[str, Any]]:
    rows = []
    for entry in sweep.entries:
        rows.append({
            "lambda": entry.lam,
            "c_index_dev": entry.c_index_dev,
            "F_i": entry.fairness.get("F_i", float("nan")),
            "F_g": entry.fairness.get("F_g", float("nan")),
            "F_eps": entry.fairness.get("F_eps", float("nan")),
            "selected": int(entry.lam == sweep.selected_lambda),
            "baseline": int(entry.is_baseline),
        })
    return rows


def write_sweep_csv(sweep: SweepResult, path: str | Path) -> Path:
    """Trade-off curve data: one row per lambda, baseline included."""
    path = Path(path)
    pd.DataFrame(sweep_rows(sweep), columns=list(SWEEP_COLUMNS)).to_csv(path, index=False)
    return path


def read_sweep_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def comparison_rows(
    results: Mapping[str, tuple[float, MetricReport, MetricReport]],
) -> list[dict[str, Any]]:
    """Rows for each model on train then test, in the order of `results`."""
    rows = []
    for split_index, split in enumerate(("train", "test")):
        for model_name, (lam, train_report, test_report) in results.items():
            report = (train_report, test_report)[split_index]
            rows.append({"model": model_name, "split": split, "lambda": lam, **report.to_dict()})
    return rows


def write_comparison(
    results: Mapping[str, tuple[float, MetricReport, MetricReport]],
    out_dir: str | Path,
    formats: Iterable[str],
) -> list[Path]:
    out_dir = Path(out_dir)
    rows = comparison_rows(results)
    written = []
    if "csv" in formats:
        path = out_dir / "comparison.csv"
        pd.DataFrame(rows, columns=list(COMPARISON_COLUMNS)).to_csv(path, index=False)
        written.append(path)
    if "json" in formats:
        models = {}
        for model_name, (lam, train_report, test_report) in results.items():
            train_values, test_values = train_report.to_dict(), test_report.to_dict()
            models[model_name] = {
                "lambda": lam,
                "train": train_values,
                "test": test_values,
                "gap": {k: train_values[k] - test_values[k] for k in ACCURACY_FIELDS},
            }
        written.append(_dump_json({"models": models}, out_dir / "comparison.json"))
    return written


def read_comparison_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def format_table(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    """Console rendering with four decimals, matching published tables."""
    frame = pd.DataFrame(list(rows), columns=list(columns))
    return frame.to_string(index=False, float_format=lambda v: f"{v:.4f}", na_rep="-")


def write_scores(
    scores: np.ndarray, hazards: np.ndarray, path: str | Path
) -> Path:
    """Waiting-list order: highest relative hazard first, ties by row."""
    path = Path(path)
    order = np.lexsort((np.arange(hazards.size), -hazards))
    frame = pd.DataFrame({
        "rank": np.arange(1, hazards.size + 1),
        "row": order,
        "risk_score": scores[order],
        "relative_hazard": hazards[order],
    })
    frame.to_csv(path, index=False)
    return path
