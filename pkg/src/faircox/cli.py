"""Command-line entry point: train, sweep, compare, synth, fetch, score.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from faircox.data import (
    DatasetFetcher,
    DatasetSchema,
    SyntheticSpec,
    generate_synthetic,
    load_csv,
    load_schema,
    save_schema,
    schema_for_synthetic,
    write_csv,
)
from faircox.errors import ConfigError, FairCoxError
from faircox.fairness import FairnessAudit, PenaltyKind, individual_fairness
from faircox.metrics import METRIC_FIELDS, MetricReport, evaluate
from faircox.optimizer import Regime, TrainConfig, train
from faircox.reports import (
    COMPARISON_COLUMNS,
    SWEEP_COLUMNS,
    comparison_rows,
    format_table,
    read_model,
    sweep_rows,
    write_comparison,
    write_metric_report,
    write_model,
    write_scores,
    write_sweep_csv,
)
from faircox.selection import DEFAULT_GRID, SplitSpec, lambda_sweep, split
from faircox.settings import Settings
from faircox.survival import SurvivalDataset

logger = logging.getLogger(__name__)

MODEL_NAMES = {
    None: "Typical CPH",
    PenaltyKind.INDIVIDUAL: "Individual FCPH",
    PenaltyKind.GROUP: "Group FCPH",
    PenaltyKind.INTERSECTIONAL: "Intersectional FCPH",
}
REPORT_FORMATS = ("json", "csv")


def _configure_logging(settings: Settings) -> None:
    """Configure the faircox logger once per process invocation.

    JSON lines in production, a short human format otherwise.
    """

    class JsonFormatter(logging.Formatter):
        def format(self, record):
            log_entry = {
                "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
                "level": record.levelname,
                "logger": record.name,
                "message": record.getMessage(),
            }
            if record.exc_info:
                log_entry["exception"] = self.formatException(record.exc_info)
            return json.dumps(log_entry)

    class SimpleFormatter(logging.Formatter):
        def format(self, record):
            return f"[{record.levelname}] {record.name}: {record.getMessage()}"

    handler = logging.StreamHandler(sys.stdout)
    handler.setLevel(settings.resolved_log_level)
    handler.setFormatter(JsonFormatter() if settings.json_logs else SimpleFormatter())

    root_logger = logging.getLogger("faircox")
    for existing in list(root_logger.handlers):
        root_logger.removeHandler(existing)
    root_logger.setLevel(settings.resolved_log_level)
    root_logger.addHandler(handler)
    root_logger.propagate = False


def _floats(value: Any, name: str) -> tuple[float, ...]:
    items = value.split(",") if isinstance(value, str) else list(value)
    try:
        return tuple(float(item) for item in items if str(item).strip() != "")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of numbers, got {value!r}") from exc


def _strings(value: Any) -> tuple[str, ...]:
    items = value.split(",") if isinstance(value, str) else list(value)
    return tuple(str(item).strip() for item in items if str(item).strip())


def _boolean(value: Any, name: str) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "yes", "1"):
        return True
    if text in ("false", "no", "0"):
        return False
    raise ConfigError(f"{name} must be true or false, got {value!r}")


# config-file key -> RunConfig field
CONFIG_KEYS = {
    "dataset": "dataset",
    "schema": "schema",
    "penalty": "penalty",
    "lambda": "lam",
    "grid": "grid",
    "seed": "seed",
    "out": "out",
    "format": "formats",
    "learning_rate": "learning_rate",
    "regime": "regime",
    "iterations": "iterations",
    "epochs": "epochs",
    "batch_size": "batch_size",
    "test_fraction": "test_fraction",
    "dev_fraction": "dev_fraction",
    "stratify_on": "stratify_on",
    "distance_scale": "distance_scale",
    "group_attribute": "group_attribute",
    "attributes": "attributes",
    "min_subgroup_count": "min_subgroup_count",
    "max_degradation": "max_degradation",
    "t_star": "t_star",
    "pair_set": "pair_set",
    "pair_dataset": "pair_dataset",
    "normalize_pairs": "normalize_pairs",
}
PAIR_SETS = ("train", "dev", "test")


@dataclass(frozen=True)
class RunConfig:
    dataset: Path | None = None
    schema: Path | None = None
    penalty: str = "none"
    lam: float = 0.0
    grid: tuple[float, ...] = DEFAULT_GRID
    seed: int = 0
    out: Path = Path("runs")
    formats: tuple[str, ...] = REPORT_FORMATS
    learning_rate: float = 0.01
    regime: str = Regime.AUTO.value
    iterations: int = 500
    epochs: int = 50
    batch_size: int = 128
    test_fraction: float = 0.20
    dev_fraction: float = 0.20
    stratify_on: str | None = None
    distance_scale: float = 1.0
    group_attribute: str | None = None
    attributes: tuple[str, ...] | None = None
    min_subgroup_count: int = 1
    max_degradation: float = 0.05
    t_star: float | None = None
    # subjects the individual penalty pairs up during training
    pair_set: str = "train"
    pair_dataset: Path | None = None
    normalize_pairs: bool = True

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base: "RunConfig | None" = None) -> "RunConfig":
        unknown = sorted(set(data) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        values: dict[str, Any] = {}
        try:
            for key, raw in data.items():
                if raw is None:
                    continue
                field_name = CONFIG_KEYS[key]
                if field_name in ("dataset", "schema", "out", "pair_dataset"):
                    values[field_name] = Path(raw)
                elif field_name == "grid":
                    values[field_name] = _floats(raw, "grid")
                elif field_name in ("formats", "attributes"):
                    values[field_name] = _strings(raw)
                elif field_name in ("seed", "iterations", "epochs", "batch_size",
                                    "min_subgroup_count"):
                    values[field_name] = int(raw)
                elif field_name == "normalize_pairs":
                    values[field_name] = _boolean(raw, key)
                elif field_name in ("penalty", "regime", "stratify_on", "group_attribute",
                                    "pair_set"):
                    values[field_name] = str(raw)
                else:
                    values[field_name] = float(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration value: {exc}") from exc
        config = dataclasses.replace(base or cls(), **values)
        config.validate()
        return config

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_mapping(data)

    def validate(self) -> None:
        if self.penalty != "none":
            try:
                PenaltyKind(self.penalty)
            except ValueError:
                raise ConfigError(f"unknown penalty {self.penalty!r}") from None
        try:
            Regime(self.regime)
        except ValueError:
            raise ConfigError(f"unknown regime {self.regime!r}") from None
        if self.pair_set not in PAIR_SETS:
            raise ConfigError(
                f"pair_set must be one of {', '.join(PAIR_SETS)}, got {self.pair_set!r}"
            )
        bad_formats = set(self.formats) - set(REPORT_FORMATS)
        if bad_formats or not self.formats:
            raise ConfigError(f"report formats must be among {', '.join(REPORT_FORMATS)}")

    @property
    def penalty_kind(self) -> PenaltyKind | None:
        return None if self.penalty == "none" else PenaltyKind(self.penalty)

    def require_inputs(self) -> None:
        for name in ("dataset", "schema"):
            path = getattr(self, name)
            if path is None:
                raise ConfigError(f"no {name} given; use --{name} or the config file")
            if not path.is_file():
                raise ConfigError(f"{name} file not found: {path}")

    def prepare_output(self) -> Path:
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {self.out}: {exc}") from exc
        return self.out

    def train_config(self, lam: float | None = None) -> TrainConfig:
        return TrainConfig(
            lam=self.lam if lam is None else lam,
            learning_rate=self.learning_rate,
            regime=Regime(self.regime),
            iterations=self.iterations,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
        )

    def split_spec(self) -> SplitSpec:
        return SplitSpec(
            test_fraction=self.test_fraction,
            dev_fraction_of_train=self.dev_fraction,
            seed=self.seed,
            stratify_on=self.stratify_on,
        )


def _run_config(args: argparse.Namespace) -> RunConfig:
    base = RunConfig.load(Path(args.config)) if getattr(args, "config", None) else RunConfig()
    overrides = {
        key: getattr(args, key)
        for key in CONFIG_KEYS
        if getattr(args, key, None) is not None
    }
    return RunConfig.from_mapping(overrides, base=base)


def _load_inputs(config: RunConfig):
    config.require_inputs()
    schema = load_schema(config.schema)
    dataset = load_csv(config.dataset, schema)
    audit = FairnessAudit.from_dataset(
        dataset,
        group_attribute=config.group_attribute or schema.group_attribute,
        attributes=config.attributes,
        distance_scale=config.distance_scale,
        min_subgroup_count=config.min_subgroup_count,
        normalize_pairs=config.normalize_pairs,
    )
    return schema, dataset, audit


def _pair_covariates(
    config: RunConfig,
    schema: DatasetSchema,
    splits: Mapping[str, SurvivalDataset],
    individual: bool,
) -> np.ndarray | None:
    """Covariates the individual penalty pairs up, or None for the training rows."""
    if config.pair_dataset is None and config.pair_set == "train":
        return None
    if not individual:
        raise ConfigError("pair_set and pair_dataset apply to the individual penalty only")
    if config.pair_dataset is None:
        pairs = splits[config.pair_set]
        source = f"the {config.pair_set} split"
    else:
        if not config.pair_dataset.is_file():
            raise ConfigError(f"pair_dataset file not found: {config.pair_dataset}")
        pairs = load_csv(config.pair_dataset, schema)
        source = str(config.pair_dataset)
    if pairs.feature_names != splits["train"].feature_names:
        raise ConfigError(
            f"pair set features {list(pairs.feature_names)} do not match the training "
            f"features {list(splits['train'].feature_names)}"
        )
    logger.info(f"Individual penalty pairs {pairs.n_subjects} subjects from {source}")
    return pairs.covariates


def _print_reports(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> None:
    print(format_table(rows, columns))


def cmd_train(args: argparse.Namespace, settings: Settings) -> int:
    config = _run_config(args)
    schema, dataset, audit = _load_inputs(config)
    out = config.prepare_output()
    train_set, dev_set, test_set = split(dataset, config.split_spec())
    kind = config.penalty_kind
    if config.lam > 0 and kind is None:
        raise ConfigError("lambda > 0 needs a penalty; use --penalty")
    penalty = audit.penalty(kind) if kind is not None else None
    splits = {"train": train_set, "dev": dev_set, "test": test_set}
    pairs = _pair_covariates(config, schema, splits, kind is PenaltyKind.INDIVIDUAL)
    model, _ = train(train_set, penalty, config.train_config(), pair_covariates=pairs)
    report = evaluate(model, train_set, test_set, audit, t_star=config.t_star)
    write_model(model, out / "model.txt")
    write_metric_report(report, out, config.formats, split="test")
    _print_reports([{"split": "test", **report.to_dict()}], ("split", *METRIC_FIELDS))
    return 0


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    config = _run_config(args)
    kind = config.penalty_kind
    if kind is None:
        raise ConfigError("sweep needs a fairness penalty; use --penalty")
    schema, dataset, audit = _load_inputs(config)
    out = config.prepare_output()
    train_set, dev_set, test_set = split(dataset, config.split_spec())
    splits = {"train": train_set, "dev": dev_set, "test": test_set}
    pairs = _pair_covariates(config, schema, splits, kind is PenaltyKind.INDIVIDUAL)
    sweep = lambda_sweep(
        train_set, dev_set, kind, config.grid, config.train_config(), audit,
        max_degradation=config.max_degradation, workers=settings.workers,
        pair_covariates=pairs,
    )
    selected = sweep.selected
    report = evaluate(selected.model, train_set, test_set, audit, t_star=config.t_star)
    write_sweep_csv(sweep, out / "sweep.csv")
    write_model(selected.model, out / "model.txt")
    write_metric_report(report, out, config.formats, split="test")
    _print_reports(sweep_rows(sweep), SWEEP_COLUMNS)
    _print_reports([{"split": "test", **report.to_dict()}], ("split", *METRIC_FIELDS))
    return 0


def cmd_compare(args: argparse.Namespace, settings: Settings) -> int:
    config = _run_config(args)
    schema, dataset, audit = _load_inputs(config)
    out = config.prepare_output()
    train_set, dev_set, test_set = split(dataset, config.split_spec())
    splits = {"train": train_set, "dev": dev_set, "test": test_set}
    # lambda_sweep hands the pair set to the individual model only
    pairs = _pair_covariates(config, schema, splits, individual=True)

    results: dict[str, tuple[float, MetricReport, MetricReport]] = {}
    baseline_model, _ = train(train_set, None, config.train_config(lam=0.0))
    results[MODEL_NAMES[None]] = (
        0.0,
        evaluate(baseline_model, train_set, train_set, audit, t_star=config.t_star),
        evaluate(baseline_model, train_set, test_set, audit, t_star=config.t_star),
    )
    for kind in PenaltyKind:
        sweep = lambda_sweep(
            train_set, dev_set, kind, config.grid, config.train_config(), audit,
            max_degradation=config.max_degradation, workers=settings.workers,
            pair_covariates=pairs,
        )
        model = sweep.selected.model
        write_sweep_csv(sweep, out / f"sweep_{kind.value}.csv")
        results[MODEL_NAMES[kind]] = (
            sweep.selected_lambda,
            evaluate(model, train_set, train_set, audit, t_star=config.t_star),
            evaluate(model, train_set, test_set, audit, t_star=config.t_star),
        )
    write_comparison(results, out, config.formats)
    _print_reports(comparison_rows(results), COMPARISON_COLUMNS)
    return 0


def _group_bias(raw: str | None) -> dict[str, float]:
    if not raw:
        return {}
    bias = {}
    for item in raw.split(","):
        label, _, value = item.partition("=")
        try:
            bias[label.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"group bias must look like g1=2.0, got {item!r}") from None
    return bias


def cmd_synth(args: argparse.Namespace, settings: Settings) -> int:
    spec = SyntheticSpec(
        n=args.n,
        beta_true=_floats(args.beta, "beta"),
        censoring_rate_target=args.censoring,
        group_bias=_group_bias(args.group_bias),
        seed=args.seed,
        proxy_shift=args.proxy_shift,
    )
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    dataset = generate_synthetic(spec)
    csv_path = write_csv(dataset, out / "synthetic.csv")
    schema_path = save_schema(schema_for_synthetic(spec), out / "synthetic.schema.json")
    print(f"{csv_path}\n{schema_path}")
    return 0


def cmd_fetch(args: argparse.Namespace, settings: Settings) -> int:
    fetcher = DatasetFetcher(args.out or settings.data_dir, timeout=settings.http_timeout)
    print(fetcher.fetch(args.name, overwrite=args.overwrite))
    return 0


def cmd_score(args: argparse.Namespace, settings: Settings) -> int:
    for name in ("model", "dataset", "schema"):
        path = Path(getattr(args, name))
        if not path.is_file():
            raise ConfigError(f"{name} file not found: {path}")
    model = read_model(args.model)
    dataset = load_csv(args.dataset, load_schema(args.schema))
    if dataset.feature_names != model.feature_names:
        raise ConfigError(
            f"dataset features {list(dataset.feature_names)} do not match the model's "
            f"{list(model.feature_names)}"
        )
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    scores = model.risk_scores(dataset.covariates)
    path = write_scores(scores, model.relative_hazards(dataset.covariates), out / "scores.csv")
    f_i = individual_fairness(
        model, dataset.covariates, args.distance_scale, normalize_pairs=args.normalize_pairs
    )
    logger.info(f"Scored {dataset.n_subjects} subjects; transductive F_i = {f_i:.4f}")
    print(path)
    return 0


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration; flags override its values")
    parser.add_argument("--dataset", help="CSV file with survival data")
    parser.add_argument("--schema", help="JSON dataset schema")
    parser.add_argument("--penalty", choices=["none", *(k.value for k in PenaltyKind)])
    parser.add_argument("--lambda", dest="lambda", type=float, help="fairness trade-off weight")
    parser.add_argument("--grid", help="comma-separated lambda grid")
    parser.add_argument("--seed", type=int, help="seed for splits and mini-batches")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--format", help="report formats: json, csv or json,csv")
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--regime", choices=[r.value for r in Regime])
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--test-fraction", dest="test_fraction", type=float)
    parser.add_argument("--dev-fraction", dest="dev_fraction", type=float)
    parser.add_argument("--stratify-on", dest="stratify_on")
    parser.add_argument("--distance-scale", dest="distance_scale", type=float)
    parser.add_argument("--group-attribute", dest="group_attribute")
    parser.add_argument("--attributes", help="comma-separated protected attributes")
    parser.add_argument("--min-subgroup-count", dest="min_subgroup_count", type=int)
    parser.add_argument("--max-degradation", dest="max_degradation", type=float)
    parser.add_argument("--t-star", dest="t_star", type=float, help="Brier score horizon")
    parser.add_argument(
        "--pair-set", dest="pair_set", choices=PAIR_SETS,
        help="split the individual penalty pairs up (default train)",
    )
    parser.add_argument(
        "--pair-dataset", dest="pair_dataset",
        help="CSV of subjects the individual penalty pairs up, e.g. the list to be scored",
    )
    parser.add_argument(
        "--normalize-pairs", dest="normalize_pairs", action=argparse.BooleanOptionalAction,
        help="divide the individual penalty by the number of pairs (default on)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faircox", description="Fair Cox proportional hazards models"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    for name, handler, help_text in (
        ("train", cmd_train, "train one model at a fixed lambda"),
        ("sweep", cmd_sweep, "grid-search lambda and select by the C-index budget"),
        ("compare", cmd_compare, "compare typical CPH with the three fair models"),
    ):
        sub = commands.add_parser(name, help=help_text)
        _add_run_arguments(sub)
        sub.set_defaults(handler=handler)

    synth = commands.add_parser("synth", help="write a synthetic dataset and its schema")
    synth.add_argument("--n", type=int, default=2000)
    synth.add_argument("--beta", default="1.0,-0.5,0.25")
    synth.add_argument("--censoring", type=float, default=0.2)
    synth.add_argument("--group-bias", dest="group_bias", help="e.g. g1=2.0")
    synth.add_argument("--proxy-shift", dest="proxy_shift", type=float, default=0.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", default="data")
    synth.set_defaults(handler=cmd_synth)

    fetch = commands.add_parser("fetch", help="download a public dataset")
    fetch.add_argument("name", help="flc or compas")
    fetch.add_argument("--out", help="download directory (default FAIRCOX_DATA_DIR)")
    fetch.add_argument("--overwrite", action="store_true")
    fetch.set_defaults(handler=cmd_fetch)

    score = commands.add_parser("score", help="rank a waiting list by relative hazard")
    score.add_argument("--model", required=True)
    score.add_argument("--dataset", required=True)
    score.add_argument("--schema", required=True)
    score.add_argument("--distance-scale", dest="distance_scale", type=float, default=1.0)
    score.add_argument(
        "--normalize-pairs", dest="normalize_pairs", action=argparse.BooleanOptionalAction,
        default=True,
    )
    score.add_argument("--out", default="runs")
    score.set_defaults(handler=cmd_score)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = Settings.from_env()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _configure_logging(settings)
    try:
        return args.handler(args, settings)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FairCoxError, OSError) as exc:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
