"""Survival data, Cox model and baseline hazard types.

All three types are frozen dataclasses holding read-only numpy arrays, so they
can be shared between threads without copying.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from faircox.errors import DataError

logger = logging.getLogger(__name__)


def _frozen(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SurvivalDataset:
    """Covariates, right-censored outcomes and protected attributes."""
    covariates: np.ndarray
    event_time: np.ndarray
    event_indicator: np.ndarray
    feature_names: tuple[str, ...]
    protected: Mapping[str, np.ndarray] = field(default_factory=dict)
    protected_codes: Mapping[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        covariates = _frozen(self.covariates, float)
        if covariates.ndim == 1:
            covariates = _frozen(covariates.reshape(-1, 1), float)
        if covariates.ndim != 2:
            raise DataError(f"covariates must be a matrix, got shape {covariates.shape}")
        n = covariates.shape[0]
        if n < 1:
            raise DataError("a dataset needs at least one subject")

        event_time = _frozen(self.event_time, float)
        event_indicator = _frozen(self.event_indicator, bool)
        if event_time.shape != (n,) or event_indicator.shape != (n,):
            raise DataError(
                f"event_time and event_indicator must have length {n}, "
                f"got {event_time.shape} and {event_indicator.shape}"
            )
        if not np.all(np.isfinite(event_time)) or np.any(event_time < 0):
            raise DataError("event times must be finite and nonnegative")
        if not np.all(np.isfinite(covariates)):
            raise DataError("covariates contain NaN or infinite entries")

        names = tuple(str(name) for name in self.feature_names)
        if len(names) != covariates.shape[1]:
            raise DataError(
                f"{len(names)} feature names for {covariates.shape[1]} covariate columns"
            )

        protected: dict[str, np.ndarray] = {}
        codes: dict[str, tuple[int, ...]] = {}
        for name, column in self.protected.items():
            values = _frozen(column, int)
            if values.shape != (n,):
                raise DataError(f"protected column {name!r} must have length {n}")
            declared = self.protected_codes.get(name)
            if declared is None:
                declared = tuple(int(v) for v in np.unique(values))
            declared = tuple(sorted(int(v) for v in declared))
            unknown = np.setdiff1d(values, declared)
            if unknown.size:
                raise DataError(
                    f"protected column {name!r} has undeclared codes {unknown.tolist()}"
                )
            protected[name] = values
            codes[name] = declared

        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "event_time", event_time)
        object.__setattr__(self, "event_indicator", event_indicator)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "protected", protected)
        object.__setattr__(self, "protected_codes", codes)

    @property
    def n_subjects(self) -> int:
        return self.covariates.shape[0]

    @property
    def n_features(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.event_indicator.sum())

    def subset(self, indices: Sequence[int] | np.ndarray) -> "SurvivalDataset":
        """Rows `indices` as a new dataset, keeping the declared code sets."""
        idx = np.asarray(indices, dtype=int)
        return SurvivalDataset(
            covariates=self.covariates[idx],
            event_time=self.event_time[idx],
            event_indicator=self.event_indicator[idx],
            feature_names=self.feature_names,
            protected={name: col[idx] for name, col in self.protected.items()},
            protected_codes=dict(self.protected_codes),
        )


@dataclass(frozen=True)
class CoxModel:
    """Linear Cox model on standardized covariates."""
    beta: np.ndarray
    feature_means: np.ndarray
    feature_scales: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        beta = _frozen(self.beta, float).reshape(-1)
        means = _frozen(self.feature_means, float).reshape(-1)
        scales = _frozen(self.feature_scales, float).reshape(-1)
        names = tuple(str(name) for name in self.feature_names)
        p = beta.shape[0]
        if means.shape[0] != p or scales.shape[0] != p or len(names) != p:
            raise DataError(
                f"model vectors disagree in length: beta={p}, means={means.shape[0]}, "
                f"scales={scales.shape[0]}, names={len(names)}"
            )
        if not np.all(np.isfinite(beta)):
            raise DataError("beta must be finite")
        if not np.all(np.isfinite(means)):
            raise DataError("feature means must be finite")
        if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
            raise DataError("feature scales must be finite and strictly positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "feature_means", means)
        object.__setattr__(self, "feature_scales", scales)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_features(self) -> int:
        return self.beta.shape[0]

    @classmethod
    def zeros(cls, means, scales, feature_names) -> "CoxModel":
        return cls(np.zeros(len(feature_names)), means, scales, feature_names)

    def with_beta(self, beta: np.ndarray) -> "CoxModel":
        return CoxModel(beta, self.feature_means, self.feature_scales, self.feature_names)

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        squeeze = X.ndim == 1
        X2 = X.reshape(1, -1) if squeeze else X
        if X2.ndim != 2 or X2.shape[1] != self.n_features:
            raise DataError(
                f"expected {self.n_features} covariates, got shape {X.shape}"
            )
        if not np.all(np.isfinite(X2)):
            raise DataError("covariates contain NaN or infinite entries")
        Z = (X2 - self.feature_means) / self.feature_scales
        return Z[0] if squeeze else Z

    def risk_scores(self, X: np.ndarray) -> np.ndarray:
        """Linear predictors beta . x~ for each row of X."""
        return self.standardize(X) @ self.beta

    def relative_hazards(self, X: np.ndarray) -> np.ndarray:
        return np.exp(self.risk_scores(X))


def standardizer_from(dataset: SurvivalDataset) -> tuple[np.ndarray, np.ndarray]:
    """Feature means and scales of `dataset` (population standard deviation).

    A constant feature gets scale 1 so it standardizes to zero.
    """
    means = dataset.covariates.mean(axis=0)
    scales = dataset.covariates.std(axis=0)
    constant = ~(scales > 0)
    for name in np.asarray(dataset.feature_names)[constant]:
        logger.warning(f"Feature {name!r} is constant; using scale 1")
    scales = np.where(constant, 1.0, scales)
    return means, scales


@dataclass(frozen=True)
class BaselineHazard:
    """Breslow step-function estimate of the cumulative baseline hazard."""
    times: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self) -> None:
        times = _frozen(self.times, float).reshape(-1)
        cumulative = _frozen(self.cumulative, float).reshape(-1)
        if times.shape != cumulative.shape:
            raise DataError("baseline times and cumulative values differ in length")
        if times.size and np.any(np.diff(times) <= 0):
            raise DataError("baseline times must be strictly increasing")
        if cumulative.size and (cumulative[0] < 0 or np.any(np.diff(cumulative) < 0)):
            raise DataError("cumulative baseline hazard must be nonnegative and nondecreasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "cumulative", cumulative)

    def at(self, t) -> np.ndarray | float:
        """H0(t): value at the largest recorded time <= t, 0 before the first."""
        t_arr = np.asarray(t, dtype=float)
        pos = np.searchsorted(self.times, t_arr, side="right") - 1
        padded = np.concatenate(([0.0], self.cumulative))
        values = padded[pos + 1]
        return float(values) if values.ndim == 0 else values
