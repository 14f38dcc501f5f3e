"""Accuracy metrics for survival predictions.

Censoring weights come from a Kaplan-Meier fit of the censoring distribution
on the training split, evaluated at the left limit G(T-) for observed events.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from faircox.errors import DataError, NumericalError
from faircox.fairness import FairnessAudit
from faircox.survival.likelihood import (
    breslow_baseline,
    neg_log_partial_likelihood,
    survival_curves,
)
from faircox.survival.models import BaselineHazard, CoxModel, SurvivalDataset

logger = logging.getLogger(__name__)

# Rows per block for pairwise concordance counts.
PAIR_BLOCK_ROWS = 1024
METRIC_FIELDS = ("c_index", "brier", "auc", "log_partial_likelihood", "F_i", "F_g", "F_eps")


@dataclass(frozen=True)
class KaplanMeierCurve:
    times: np.ndarray
    survival: np.ndarray
    for_censoring: bool = False

    def at(self, t) -> np.ndarray | float:
        """S(t), right-continuous; 1 before the first time."""
        return self._lookup(t, side="right")

    def left_limit(self, t) -> np.ndarray | float:
        """S(t-): survival just before t."""
        return self._lookup(t, side="left")

    def _lookup(self, t, side: str):
        pos = np.searchsorted(self.times, np.asarray(t, dtype=float), side=side)
        values = np.concatenate(([1.0], self.survival))[pos]
        return float(values) if values.ndim == 0 else values


def kaplan_meier(times, indicator, for_censoring: bool = False) -> KaplanMeierCurve:
    """Product-limit estimator over the distinct observed times."""
    times = np.asarray(times, dtype=float)
    indicator = np.asarray(indicator, dtype=bool)
    if times.size == 0:
        raise DataError("Kaplan-Meier needs at least one observation")
    if times.shape != indicator.shape:
        raise DataError("times and indicator differ in length")
    distinct, inverse, counts = np.unique(times, return_inverse=True, return_counts=True)
    deaths = np.bincount(inverse, weights=indicator.astype(float), minlength=distinct.size)
    at_risk = times.size - np.concatenate(([0], np.cumsum(counts)[:-1]))
    survival = np.cumprod(1.0 - deaths / at_risk)
    return KaplanMeierCurve(times=distinct, survival=survival, for_censoring=for_censoring)


def censoring_curve(dataset: SurvivalDataset) -> KaplanMeierCurve:
    return kaplan_meier(dataset.event_time, ~dataset.event_indicator, for_censoring=True)


def concordance_index(risk_scores, times, events) -> float:
    """Harrell's C with half credit for tied scores; equal times are not comparable."""
    scores = np.asarray(risk_scores, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if not (scores.shape == times.shape == events.shape):
        raise DataError("risk scores, times and events differ in length")
    comparable = concordant = tied = 0
    for start in range(0, scores.size, PAIR_BLOCK_ROWS):
        rows = slice(start, start + PAIR_BLOCK_ROWS)
        pairs = (times[rows, None] < times[None, :]) & events[rows, None]
        comparable += np.count_nonzero(pairs)
        concordant += np.count_nonzero(pairs & (scores[rows, None] > scores[None, :]))
        tied += np.count_nonzero(pairs & (scores[rows, None] == scores[None, :]))
    if comparable == 0:
        raise DataError("degenerate: no comparable pairs for the concordance index")
    return (concordant + 0.5 * tied) / comparable


def _event_weights(censor_curve: KaplanMeierCurve, times: np.ndarray, what: str) -> np.ndarray:
    """1 / G(T-) with zero where the censoring support is exhausted."""
    g = np.atleast_1d(censor_curve.left_limit(times))
    dropped = int(np.count_nonzero(g <= 0))
    if dropped:
        logger.warning(f"Dropping {dropped} {what} with zero censoring survival G(T-)")
    with np.errstate(divide="ignore"):
        return np.where(g > 0, 1.0 / np.where(g > 0, g, 1.0), 0.0)


def brier_score(
    model: CoxModel,
    baseline: BaselineHazard,
    eval_set: SurvivalDataset,
    censor_curve: KaplanMeierCurve,
    t_star: float,
) -> float:
    """IPCW Brier score at horizon t*."""
    T = eval_set.event_time
    E = eval_set.event_indicator
    if not T.min() <= t_star <= T.max():
        raise DataError(
            f"horizon {t_star} lies outside the observed time range [{T.min()}, {T.max()}]"
        )
    g_star = censor_curve.at(t_star)
    if not g_star > 0:
        raise NumericalError("horizon beyond censoring support: G(t*) = 0")

    predicted = survival_curves(model, baseline, eval_set.covariates, [t_star])[:, 0]
    died = (T <= t_star) & E
    survived = T > t_star
    weights = np.zeros(T.size)
    weights[died] = _event_weights(censor_curve, T[died], "subjects")
    weights[survived] = 1.0 / g_star
    kept = ~(died & (weights == 0))
    squared = np.where(died, predicted ** 2, (1.0 - predicted) ** 2)
    return float(np.sum(weights * squared) / np.count_nonzero(kept))


def time_dependent_auc(
    model: CoxModel,
    eval_set: SurvivalDataset,
    censor_curve: KaplanMeierCurve,
    time_grid,
) -> tuple[np.ndarray, float]:
    """Cumulative/dynamic AUC at each grid time and its mean over valid points.

    Cases (T <= t, event) carry weight 1 / G(T-); controls (T > t) weight 1.
    Grid points without cases or controls are NaN in the per-time vector.
    """
    scores = model.risk_scores(eval_set.covariates)
    T = eval_set.event_time
    E = eval_set.event_indicator
    grid = np.atleast_1d(np.asarray(time_grid, dtype=float))
    per_time = np.full(grid.size, np.nan)
    for k, t in enumerate(grid):
        cases = (T <= t) & E
        controls = T > t
        if not cases.any() or not controls.any():
            logger.warning(f"Skipping AUC at t={t:g}: no cases or no controls")
            continue
        weights = _event_weights(censor_curve, T[cases], "cases")
        if not weights.any():
            logger.warning(f"Skipping AUC at t={t:g}: no case has positive weight")
            continue
        control_scores = np.sort(scores[controls])
        below = np.searchsorted(control_scores, scores[cases], side="left")
        ties = np.searchsorted(control_scores, scores[cases], side="right") - below
        per_time[k] = np.sum(weights * (below + 0.5 * ties)) / (
            weights.sum() * control_scores.size
        )
    valid = ~np.isnan(per_time)
    if not valid.any():
        raise DataError("no valid time point for the time-dependent AUC")
    return per_time, float(per_time[valid].mean())


def default_horizon(train: SurvivalDataset) -> float:
    """Median observed event time of the training split."""
    if train.n_events == 0:
        raise DataError("no events: cannot choose an evaluation horizon")
    return float(np.median(train.event_time[train.event_indicator]))


def default_time_grid(train: SurvivalDataset, points: int = 100) -> np.ndarray:
    """Distinct quantiles of training event times between the 10th and 90th percentile."""
    if train.n_events == 0:
        raise DataError("no events: cannot choose an AUC time grid")
    event_times = train.event_time[train.event_indicator]
    return np.unique(np.quantile(event_times, np.linspace(0.1, 0.9, points)))


@dataclass(frozen=True)
class MetricReport:
    c_index: float
    brier: float
    time_dependent_auc: float
    log_partial_likelihood: float
    fairness: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        values = self.to_dict()
        missing = [name for name in ("F_i", "F_g", "F_eps") if name not in self.fairness]
        if missing:
            raise DataError(f"metric report lacks fairness measures: {', '.join(missing)}")
        bad = [name for name, value in values.items() if not np.isfinite(value)]
        if bad:
            raise NumericalError(f"non-finite metrics: {', '.join(bad)}")

    def to_dict(self) -> dict[str, float]:
        return {
            "c_index": float(self.c_index),
            "brier": float(self.brier),
            "auc": float(self.time_dependent_auc),
            "log_partial_likelihood": float(self.log_partial_likelihood),
            "F_i": float(self.fairness.get("F_i", np.nan)),
            "F_g": float(self.fairness.get("F_g", np.nan)),
            "F_eps": float(self.fairness.get("F_eps", np.nan)),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "MetricReport":
        return cls(
            c_index=float(data["c_index"]),
            brier=float(data["brier"]),
            time_dependent_auc=float(data["auc"]),
            log_partial_likelihood=float(data["log_partial_likelihood"]),
            fairness={name: float(data[name]) for name in ("F_i", "F_g", "F_eps")},
        )


def evaluate(
    model: CoxModel,
    train: SurvivalDataset,
    eval_set: SurvivalDataset,
    audit: FairnessAudit,
    t_star: float | None = None,
    time_grid=None,
) -> MetricReport:
    """All accuracy and fairness measures of `model` on `eval_set`.

    The baseline hazard, censoring curve, horizon and AUC grid come from the
    training split; fairness is measured on the evaluated subjects.
    """
    baseline = breslow_baseline(model, train)
    censor = censoring_curve(train)
    horizon = default_horizon(train) if t_star is None else float(t_star)
    grid = default_time_grid(train) if time_grid is None else time_grid
    scores = model.risk_scores(eval_set.covariates)
    _, auc = time_dependent_auc(model, eval_set, censor, grid)
    return MetricReport(
        c_index=concordance_index(scores, eval_set.event_time, eval_set.event_indicator),
        brier=brier_score(model, baseline, eval_set, censor, horizon),
        time_dependent_auc=auc,
        log_partial_likelihood=-neg_log_partial_likelihood(model, eval_set, normalize=True),
        fairness=audit.measure(model, eval_set),
    )
