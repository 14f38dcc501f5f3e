"""Declarative CSV schemas for survival datasets.

Schemas are JSON documents; see `schemas/flc.json` for a complete example.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import pandas as pd

from faircox.errors import ConfigError

DEFAULT_TRUE_VALUES = ("1", "true", "True", "TRUE", "yes", "Yes")


class MissingPolicy(str, Enum):
    DROP_ROW = "drop_row"
    ERROR = "error"
    # fill missing numeric features with the column median; drop other gaps
    IMPUTE_MEDIAN = "impute_median"


def raw_key(value: Any) -> str | None:
    """Canonical string form of a raw CSV cell, None when missing."""
    if value is None:
        return None
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return None
        if float(value).is_integer():
            return str(int(value))
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    text = str(value).strip()
    return text or None


@dataclass(frozen=True)
class ProtectedCoding:
    """Maps a raw column to integer codes, by lookup table or threshold.

    With `threshold`, values <= threshold code to 0 and larger values to 1.
    """
    name: str
    source: str
    mapping: Mapping[str, int] | None = None
    threshold: float | None = None
    labels: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if (self.mapping is None) == (self.threshold is None):
            raise ConfigError(
                f"protected column {self.name!r} needs exactly one of a coding map or a threshold"
            )
        if self.mapping is not None:
            mapping = {str(k): int(v) for k, v in self.mapping.items()}
            if len(set(mapping.values())) != len(mapping):
                raise ConfigError(f"coding map of {self.name!r} is not one-to-one")
            labels = {code: raw for raw, code in mapping.items()}
            labels.update({int(k): str(v) for k, v in self.labels.items()})
            object.__setattr__(self, "mapping", mapping)
        else:
            labels = {0: f"<={self.threshold:g}", 1: f">{self.threshold:g}"}
            labels.update({int(k): str(v) for k, v in self.labels.items()})
        object.__setattr__(self, "labels", labels)

    def codes(self) -> tuple[int, ...]:
        if self.mapping is not None:
            return tuple(sorted(set(self.mapping.values())))
        return (0, 1)

    def label(self, code: int) -> str:
        return self.labels[int(code)]

    def encode(self, column: pd.Series) -> np.ndarray:
        """Float codes with NaN for missing or unmappable values."""
        if self.mapping is not None:
            return np.array(
                [self.mapping.get(raw_key(v), np.nan) for v in column], dtype=float
            )
        values = pd.to_numeric(column, errors="coerce").to_numpy(dtype=float)
        return np.where(np.isnan(values), np.nan, (values > self.threshold).astype(float))

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"name": self.name, "source": self.source}
        if self.mapping is not None:
            data["coding"] = dict(self.mapping)
        else:
            data["coding"] = {"threshold": self.threshold}
        data["labels"] = {str(k): v for k, v in sorted(self.labels.items())}
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProtectedCoding":
        try:
            name = data["name"]
            coding = data["coding"]
        except KeyError as exc:
            raise ConfigError(f"protected column entry lacks {exc.args[0]!r}") from exc
        threshold = coding.get("threshold") if isinstance(coding, Mapping) else None
        return cls(
            name=name,
            source=data.get("source", name),
            mapping=None if threshold is not None else coding,
            threshold=None if threshold is None else float(threshold),
            labels={int(k): v for k, v in (data.get("labels") or {}).items()},
        )


@dataclass(frozen=True)
class DatasetSchema:
    name: str
    time_column: str
    event_column: str
    feature_columns: tuple[str, ...]
    protected_columns: tuple[ProtectedCoding, ...] = ()
    event_true_values: tuple[str, ...] = DEFAULT_TRUE_VALUES
    feature_codings: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    include_protected_as_features: bool = False
    missing_policy: MissingPolicy = MissingPolicy.DROP_ROW
    entry_column: str | None = None
    dedupe_on: str | None = None
    group_attribute: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        object.__setattr__(self, "protected_columns", tuple(self.protected_columns))
        object.__setattr__(self, "event_true_values", tuple(str(v) for v in self.event_true_values))
        try:
            object.__setattr__(self, "missing_policy", MissingPolicy(self.missing_policy))
        except ValueError as exc:
            raise ConfigError(f"unknown missing_policy {self.missing_policy!r}") from exc

        outcome = {self.time_column, self.event_column} | (
            {self.entry_column} if self.entry_column else set()
        )
        clashes = outcome & set(self.feature_columns)
        if clashes:
            raise ConfigError(f"outcome columns listed as features: {', '.join(sorted(clashes))}")
        if not self.feature_columns and not self.include_protected_as_features:
            raise ConfigError("the schema declares no feature columns")
        names = [p.name for p in self.protected_columns]
        if len(set(names)) != len(names):
            raise ConfigError("protected attribute names must be unique")
        unknown_codings = set(self.feature_codings) - set(self.feature_columns)
        if unknown_codings:
            raise ConfigError(
                f"feature codings for non-feature columns: {', '.join(sorted(unknown_codings))}"
            )
        if self.group_attribute is not None and self.group_attribute not in names:
            raise ConfigError(f"group_attribute {self.group_attribute!r} is not a protected column")

    @property
    def protected_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.protected_columns)

    def source_columns(self) -> set[str]:
        columns = {self.time_column, self.event_column, *self.feature_columns}
        columns |= {p.source for p in self.protected_columns}
        if self.entry_column:
            columns.add(self.entry_column)
        if self.dedupe_on:
            columns.add(self.dedupe_on)
        return columns

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "name": self.name,
            "time_column": self.time_column,
            "event_column": self.event_column,
            "event_true_values": list(self.event_true_values),
            "feature_columns": list(self.feature_columns),
            "protected_columns": [p.to_dict() for p in self.protected_columns],
            "include_protected_as_features": self.include_protected_as_features,
            "missing_policy": self.missing_policy.value,
        }
        if self.feature_codings:
            data["feature_codings"] = {k: dict(v) for k, v in self.feature_codings.items()}
        for key in ("entry_column", "dedupe_on", "group_attribute"):
            if getattr(self, key) is not None:
                data[key] = getattr(self, key)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DatasetSchema":
        known = {
            "name", "time_column", "event_column", "event_true_values", "feature_columns",
            "feature_codings", "protected_columns", "include_protected_as_features",
            "missing_policy", "entry_column", "dedupe_on", "group_attribute", "description",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown schema keys: {', '.join(sorted(unknown))}")
        try:
            return cls(
                name=data.get("name", "dataset"),
                time_column=data["time_column"],
                event_column=data["event_column"],
                feature_columns=tuple(data.get("feature_columns", ())),
                protected_columns=tuple(
                    ProtectedCoding.from_dict(p) for p in data.get("protected_columns", ())
                ),
                event_true_values=tuple(data.get("event_true_values", DEFAULT_TRUE_VALUES)),
                feature_codings={
                    k: {str(raw): float(v) for raw, v in coding.items()}
                    for k, coding in (data.get("feature_codings") or {}).items()
                },
                include_protected_as_features=bool(data.get("include_protected_as_features", False)),
                missing_policy=data.get("missing_policy", MissingPolicy.DROP_ROW.value),
                entry_column=data.get("entry_column"),
                dedupe_on=data.get("dedupe_on"),
                group_attribute=data.get("group_attribute"),
            )
        except KeyError as exc:
            raise ConfigError(f"schema lacks required key {exc.args[0]!r}") from exc


def load_schema(path: str | Path) -> DatasetSchema:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"schema file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"schema file {path} is not valid JSON: {exc}") from exc
    return DatasetSchema.from_dict(data)


def save_schema(schema: DatasetSchema, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path
