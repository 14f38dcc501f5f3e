"""Synthetic right-censored survival data with known coefficients."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from faircox.data.schema import DatasetSchema, ProtectedCoding
from faircox.errors import ConfigError, NumericalError
from faircox.survival.models import SurvivalDataset

logger = logging.getLogger(__name__)

GROUP_LABELS = {"g0": 0, "g1": 1}
SEX_LABELS = {"m": 0, "f": 1}
CENSORING_TOLERANCE = 0.05


@dataclass(frozen=True)
class SyntheticSpec:
    """Exponential event times with rate exp(beta_true . x) * group multiplier.

    `proxy_shift` moves the first covariate up for members of group g1, which
    lets a linear model express (and a fairness penalty remove) group bias.
    """
    n: int
    beta_true: tuple[float, ...]
    censoring_rate_target: float = 0.2
    group_bias: Mapping[str, float] = field(default_factory=dict)
    seed: int = 0
    proxy_shift: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        if self.n < 2:
            raise ConfigError(f"synthetic datasets need n >= 2, got {self.n}")
        if not self.beta_true:
            raise ConfigError("beta_true needs at least one coefficient")
        if not 0 <= self.censoring_rate_target < 1:
            raise ConfigError("censoring_rate_target must lie in [0, 1)")
        for label, multiplier in self.group_bias.items():
            if label not in GROUP_LABELS:
                raise ConfigError(f"unknown group {label!r}; expected one of {sorted(GROUP_LABELS)}")
            if not multiplier > 0:
                raise ConfigError(f"group multiplier for {label!r} must be positive")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f"x{k}" for k in range(len(self.beta_true)))


def _calibrate_censoring(
    event_times: np.ndarray, unit_draws: np.ndarray, target: float
) -> float:
    """Exponential censoring rate whose realized censoring fraction is nearest `target`.

    Subject i is censored iff rate > unit_draws[i] / event_times[i], so the
    realized fraction is a step function of the rate; the rate is placed
    between the two order statistics bracketing round(target * n).
    """
    n = event_times.size
    thresholds = np.sort(unit_draws / event_times)
    k = int(np.floor(target * n + 0.5))
    if k == 0:
        rate = thresholds[0] / 2.0
    elif k == n:
        rate = thresholds[-1] * 2.0
    else:
        rate = float(np.sqrt(thresholds[k - 1] * thresholds[k]))
    realized = float(np.mean(unit_draws / rate < event_times))
    if not np.isfinite(rate) or rate <= 0 or abs(realized - target) > CENSORING_TOLERANCE:
        raise NumericalError(
            f"censoring calibration failed: realized fraction "
            f"{realized:.3f} vs target {target:.3f}"
        )
    return float(rate)


def generate_synthetic(spec: SyntheticSpec) -> SurvivalDataset:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    beta = np.asarray(spec.beta_true)
    X = rng.standard_normal((spec.n, beta.size))
    group = rng.integers(0, 2, spec.n)
    sex = rng.integers(0, 2, spec.n)
    X[:, 0] += spec.proxy_shift * group

    multiplier = np.ones(spec.n)
    for label, value in spec.group_bias.items():
        multiplier[group == GROUP_LABELS[label]] = value
    rate = np.exp(X @ beta) * multiplier
    event_times = rng.exponential(1.0 / rate)
    unit_draws = rng.exponential(1.0, spec.n)

    if spec.censoring_rate_target == 0:
        times, events = event_times, np.ones(spec.n, dtype=bool)
    else:
        censor_rate = _calibrate_censoring(event_times, unit_draws, spec.censoring_rate_target)
        censor_times = unit_draws / censor_rate
        events = event_times <= censor_times
        times = np.minimum(event_times, censor_times)

    logger.info(
        f"Generated {spec.n} synthetic subjects, {1 - events.mean():.1%} censored"
    )
    return SurvivalDataset(
        covariates=X,
        event_time=times,
        event_indicator=events,
        feature_names=spec.feature_names,
        protected={"group": group, "sex": sex},
        protected_codes={"group": (0, 1), "sex": (0, 1)},
    )


def schema_for_synthetic(spec: SyntheticSpec) -> DatasetSchema:
    """Schema matching `write_csv` output of a synthetic dataset."""
    return DatasetSchema(
        name="synthetic",
        time_column="time",
        event_column="event",
        feature_columns=spec.feature_names,
        protected_columns=(
            ProtectedCoding(
                "group", "group",
                mapping={"0": 0, "1": 1},
                labels={code: label for label, code in GROUP_LABELS.items()},
            ),
            ProtectedCoding(
                "sex", "sex",
                mapping={"0": 0, "1": 1},
                labels={code: label for label, code in SEX_LABELS.items()},
            ),
        ),
        group_attribute="group",
    )
