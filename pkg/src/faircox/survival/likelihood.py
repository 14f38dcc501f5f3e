"""Cox partial likelihood, its gradient, and hazard/survival evaluation.

Ties follow the Breslow convention: subjects with tied event times share the
full risk set {j : T_j >= t}. Every risk-set sum is evaluated in log space so
linear predictors of several hundred in magnitude neither overflow nor
underflow.
"""
from __future__ import annotations

import numpy as np

from faircox.errors import DataError, NumericalError
from faircox.survival.models import BaselineHazard, CoxModel, SurvivalDataset


def _suffix_logsumexp(values: np.ndarray) -> np.ndarray:
    """log sum_{k >= i} exp(values[k]) along axis 0."""
    return np.logaddexp.accumulate(values[::-1], axis=0)[::-1]


def _risk_set_starts(sorted_time: np.ndarray, query: np.ndarray) -> np.ndarray:
    """First position in ascending `sorted_time` whose time is >= each query."""
    return np.searchsorted(sorted_time, query, side="left")


def partial_likelihood_and_gradient(
    Z: np.ndarray,
    beta: np.ndarray,
    time: np.ndarray,
    event: np.ndarray,
    normalize: bool = True,
    with_gradient: bool = True,
) -> tuple[float, np.ndarray | None]:
    """Negative log partial likelihood on standardized covariates `Z`.

    Array-level worker shared by the public operations and the trainer.
    """
    n_events = int(event.sum())
    if n_events == 0:
        raise DataError("no events: the partial likelihood needs at least one observed event")

    eta = Z @ beta
    order = np.argsort(time, kind="stable")
    starts = _risk_set_starts(time[order], time[event])
    log_den = _suffix_logsumexp(eta[order])[starts]
    value = -float(np.sum(eta[event] - log_den))

    grad = None
    if with_gradient:
        Z_sorted = Z[order]
        eta_sorted = eta[order][:, None]
        with np.errstate(divide="ignore"):
            log_pos = _suffix_logsumexp(eta_sorted + np.log(np.clip(Z_sorted, 0.0, None)))
            log_neg = _suffix_logsumexp(eta_sorted + np.log(np.clip(-Z_sorted, 0.0, None)))
        den = log_den[:, None]
        weighted_mean = np.exp(log_pos[starts] - den) - np.exp(log_neg[starts] - den)
        grad = np.sum(weighted_mean - Z[event], axis=0)

    if normalize:
        value /= n_events
        if grad is not None:
            grad = grad / n_events
    if not np.isfinite(value):
        raise NumericalError("partial likelihood is not finite")
    return value, grad


def relative_hazard(model: CoxModel, x) -> float:
    """exp(beta . x~) for one raw covariate vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError(f"expected a covariate vector, got shape {x.shape}")
    hazard = float(np.exp(model.standardize(x) @ model.beta))
    if not np.isfinite(hazard):
        raise NumericalError("relative hazard overflowed")
    return hazard


def risk_set(dataset: SurvivalDataset, t: float) -> np.ndarray:
    """Indices of subjects with event_time >= t, censored or not."""
    if not t >= 0:
        raise DataError(f"risk set time must be nonnegative, got {t}")
    return np.flatnonzero(dataset.event_time >= t)


def neg_log_partial_likelihood(
    model: CoxModel, dataset: SurvivalDataset, normalize: bool = True
) -> float:
    value, _ = partial_likelihood_and_gradient(
        model.standardize(dataset.covariates),
        model.beta,
        dataset.event_time,
        dataset.event_indicator,
        normalize=normalize,
        with_gradient=False,
    )
    return value


def neg_log_partial_likelihood_gradient(
    model: CoxModel, dataset: SurvivalDataset, normalize: bool = True
) -> np.ndarray:
    _, grad = partial_likelihood_and_gradient(
        model.standardize(dataset.covariates),
        model.beta,
        dataset.event_time,
        dataset.event_indicator,
        normalize=normalize,
    )
    return grad


def breslow_baseline(model: CoxModel, dataset: SurvivalDataset) -> BaselineHazard:
    """Breslow estimate: dH0(t_k) = d_k / sum_{R(t_k)} exp(beta . x~_j)."""
    if dataset.n_events == 0:
        raise DataError("no events: cannot estimate a baseline hazard")
    time = dataset.event_time
    eta = model.risk_scores(dataset.covariates)
    event_times, counts = np.unique(time[dataset.event_indicator], return_counts=True)
    order = np.argsort(time, kind="stable")
    log_den = _suffix_logsumexp(eta[order])[_risk_set_starts(time[order], event_times)]
    increments = counts * np.exp(-log_den)
    return BaselineHazard(times=event_times, cumulative=np.cumsum(increments))


def survival_probability(
    model: CoxModel, baseline: BaselineHazard, x, t: float
) -> float:
    """S(t | x) = exp(-H0(t) * exp(beta . x~))."""
    if not t >= 0:
        raise DataError(f"survival time must be nonnegative, got {t}")
    return float(np.exp(-baseline.at(t) * relative_hazard(model, x)))


def survival_curves(
    model: CoxModel, baseline: BaselineHazard, X: np.ndarray, times
) -> np.ndarray:
    """Survival probabilities with shape (n_subjects, n_times)."""
    hazards = model.relative_hazards(X)
    cumulative = np.atleast_1d(baseline.at(np.asarray(times, dtype=float)))
    return np.exp(-np.outer(hazards, cumulative))
