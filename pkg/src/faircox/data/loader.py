"""CSV ingestion into `SurvivalDataset`."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd

from faircox.data.schema import DatasetSchema, MissingPolicy, raw_key
from faircox.errors import ConfigError, DataError
from faircox.survival.models import SurvivalDataset

logger = logging.getLogger(__name__)


def _read_frame(path: Path) -> pd.DataFrame:
    if not path.is_file():
        raise ConfigError(f"dataset file not found: {path}")
    try:
        return pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot parse {path} as CSV: {exc}") from exc


def _feature_column(frame: pd.DataFrame, name: str, schema: DatasetSchema) -> np.ndarray:
    coding = schema.feature_codings.get(name)
    if coding is not None:
        return np.array([coding.get(raw_key(v), np.nan) for v in frame[name]], dtype=float)
    return pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float, copy=True)


def _first_problem(frame: pd.DataFrame, bad: dict[str, np.ndarray], sources: dict[str, str]):
    """(file line, column, raw value) of the earliest bad cell."""
    rows = [(int(np.argmax(mask)), name) for name, mask in bad.items() if mask.any()]
    position, name = min(rows)
    column = sources[name]
    # header is line 1
    return position + 2, column, frame[column].iloc[position]


def load_csv(path: str | Path, schema: DatasetSchema) -> SurvivalDataset:
    """Read a CSV file and validate it against `schema`."""
    path = Path(path)
    frame = _read_frame(path)
    missing_columns = sorted(schema.source_columns() - set(frame.columns))
    if missing_columns:
        raise ConfigError(f"unknown column(s) in {path}: {', '.join(missing_columns)}")
    n_read = len(frame)
    if schema.dedupe_on:
        frame = frame.drop_duplicates(subset=schema.dedupe_on, keep="first")
    frame = frame.reset_index(drop=True)

    time = pd.to_numeric(frame[schema.time_column], errors="coerce").to_numpy(dtype=float)
    if schema.entry_column:
        time = time - pd.to_numeric(frame[schema.entry_column], errors="coerce").to_numpy(dtype=float)
    event_raw = [raw_key(v) for v in frame[schema.event_column]]
    event = np.array([v is not None and v in schema.event_true_values for v in event_raw])
    features = {name: _feature_column(frame, name, schema) for name in schema.feature_columns}
    protected = {p.name: p.encode(frame[p.source]) for p in schema.protected_columns}

    outcome_bad = {
        schema.time_column: ~np.isfinite(time) | (time < 0),
        schema.event_column: np.array([v is None for v in event_raw]),
    }
    feature_bad = {name: np.isnan(values) for name, values in features.items()}
    protected_bad = {name: np.isnan(codes) for name, codes in protected.items()}
    sources = {schema.time_column: schema.time_column, schema.event_column: schema.event_column}
    sources.update({name: name for name in features})
    sources.update({p.name: p.source for p in schema.protected_columns})

    policy = schema.missing_policy
    if policy is MissingPolicy.ERROR:
        everything = {**outcome_bad, **feature_bad, **protected_bad}
        if any(mask.any() for mask in everything.values()):
            line, column, value = _first_problem(frame, everything, sources)
            raise DataError(
                f"{path}: line {line} has a missing or unmappable value {value!r} "
                f"in column {column!r}"
            )
        keep = np.ones(len(frame), dtype=bool)
    else:
        drop = np.zeros(len(frame), dtype=bool)
        for mask in (*outcome_bad.values(), *protected_bad.values()):
            drop |= mask
        if policy is MissingPolicy.DROP_ROW:
            for mask in feature_bad.values():
                drop |= mask
        keep = ~drop
        if policy is MissingPolicy.IMPUTE_MEDIAN:
            for name, values in features.items():
                gaps = np.isnan(values) & keep
                if gaps.any():
                    observed = values[keep & ~np.isnan(values)]
                    if observed.size == 0:
                        raise DataError(f"column {name!r} has no observed values to impute from")
                    values[gaps] = np.median(observed)
                    logger.info(f"Imputed {int(gaps.sum())} missing values in {name!r}")

    if not keep.any():
        raise DataError(f"{path}: no usable rows after applying the missing-value policy")

    columns = [features[name][keep] for name in schema.feature_columns]
    names = list(schema.feature_columns)
    if schema.include_protected_as_features:
        columns += [protected[p.name][keep] for p in schema.protected_columns]
        names += [p.name for p in schema.protected_columns]

    dataset = SurvivalDataset(
        covariates=np.column_stack(columns),
        event_time=time[keep],
        event_indicator=event[keep],
        feature_names=tuple(names),
        protected={name: codes[keep].astype(int) for name, codes in protected.items()},
        protected_codes={p.name: p.codes() for p in schema.protected_columns},
    )
    dropped = n_read - dataset.n_subjects
    logger.info(
        f"Loaded {dataset.n_subjects} rows from {path} ({dropped} dropped, "
        f"{dataset.n_events} events)"
    )
    return dataset


def write_csv(
    dataset: SurvivalDataset,
    path: str | Path,
    time_column: str = "time",
    event_column: str = "event",
) -> Path:
    """Write a dataset as CSV: features, then time, event and protected codes."""
    path = Path(path)
    frame = pd.DataFrame(dataset.covariates, columns=list(dataset.feature_names))
    frame[time_column] = dataset.event_time
    frame[event_column] = dataset.event_indicator.astype(int)
    for name, codes in dataset.protected.items():
        frame[name] = codes
    frame.to_csv(path, index=False, float_format="%.17g")
    return path
