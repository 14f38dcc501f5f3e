"""Training of typical and fair Cox models with Adam.

The objective is the per-event negative log partial likelihood plus lambda
times a fairness penalty. Training starts from beta = 0, where every fairness
penalty is 0, and runs for a fixed budget: full-gradient iterations, or
seeded mini-batch epochs with risk sets restricted to the batch.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from faircox.errors import ConfigError, DataError, NumericalError
from faircox.fairness import (
    FairnessPenalty,
    PenaltyKind,
    penalty_terms,
    require_penalty_attributes,
)
from faircox.survival.likelihood import partial_likelihood_and_gradient
from faircox.survival.models import CoxModel, SurvivalDataset, standardizer_from

logger = logging.getLogger(__name__)


class Regime(str, Enum):
    FULL_BATCH = "full_batch"
    MINI_BATCH = "mini_batch"
    # mini-batch for the individual penalty, full batch otherwise
    AUTO = "auto"


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.0
    learning_rate: float = 0.01
    regime: Regime = Regime.FULL_BATCH
    iterations: int = 500
    epochs: int = 50
    batch_size: int = 128
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "regime", Regime(self.regime))
        except ValueError:
            raise ConfigError(f"unknown regime {self.regime!r}") from None
        problems: list[str] = []
        if not self.lam >= 0 or not np.isfinite(self.lam):
            problems.append(f"lambda must be a finite value >= 0, got {self.lam}")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.iterations < 1:
            problems.append(f"iterations must be >= 1, got {self.iterations}")
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            problems.append("Adam decay rates must lie in [0, 1)")
        if not self.adam_epsilon > 0:
            problems.append("adam_epsilon must be > 0")
        if problems:
            raise ConfigError("; ".join(problems))

    def resolved_regime(self, penalty: FairnessPenalty | None) -> Regime:
        if self.regime is not Regime.AUTO:
            return self.regime
        if penalty is not None and self.lam > 0 and penalty.kind is PenaltyKind.INDIVIDUAL:
            return Regime.MINI_BATCH
        return Regime.FULL_BATCH


@dataclass(frozen=True)
class TrainReport:
    final_beta: np.ndarray
    loss_trace: np.ndarray
    penalty_trace: np.ndarray
    wall_time: float
    regime: Regime
    gradient_norm: float

    @property
    def n_steps(self) -> int:
        return len(self.loss_trace)

    @property
    def final_objective(self) -> float:
        return float(self.loss_trace[-1])


class Adam:
    """Adam with bias-corrected first and second moment estimates."""

    def __init__(
        self,
        n_params: int,
        lr: float = 0.01,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (grad * grad)
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def _check_penalty(
    penalty: FairnessPenalty | None, lam: float, dataset: SurvivalDataset
) -> FairnessPenalty | None:
    if not lam >= 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    if lam > 0 and penalty is None:
        raise ConfigError("a fairness penalty is required when lambda > 0")
    if lam == 0:
        return None
    require_penalty_attributes(penalty, dataset)
    return penalty


def objective_terms(
    Z: np.ndarray,
    beta: np.ndarray,
    time_: np.ndarray,
    event: np.ndarray,
    protected: Mapping[str, np.ndarray],
    penalty: FairnessPenalty | None,
    lam: float,
    warn: bool = True,
    pair_Z: np.ndarray | None = None,
) -> tuple[float, float, np.ndarray]:
    """(objective, penalty value, gradient) on standardized covariates.

    A batch without events contributes no likelihood term. `pair_Z`, when
    given, replaces `Z` as the subjects the individual penalty pairs up.
    """
    if event.any():
        loss, grad = partial_likelihood_and_gradient(Z, beta, time_, event)
    else:
        loss, grad = 0.0, np.zeros_like(beta)
    penalty_value = 0.0
    if penalty is not None and lam > 0:
        penalty_rows = Z if pair_Z is None else pair_Z
        penalty_value, penalty_grad = penalty_terms(
            penalty, penalty_rows, beta, protected, warn=warn
        )
        grad = grad + lam * penalty_grad
    return loss + lam * penalty_value, penalty_value, grad


def objective(
    model: CoxModel,
    dataset: SurvivalDataset,
    penalty: FairnessPenalty | None,
    lam: float,
) -> float:
    """Normalized negative log partial likelihood plus lambda * penalty."""
    penalty = _check_penalty(penalty, lam, dataset)
    if dataset.n_events == 0:
        raise DataError("no events: the objective needs at least one observed event")
    value, _, _ = objective_terms(
        model.standardize(dataset.covariates),
        model.beta,
        dataset.event_time,
        dataset.event_indicator,
        dataset.protected,
        penalty,
        lam,
    )
    return value


def objective_gradient(
    model: CoxModel,
    dataset: SurvivalDataset,
    penalty: FairnessPenalty | None,
    lam: float,
) -> np.ndarray:
    penalty = _check_penalty(penalty, lam, dataset)
    if dataset.n_events == 0:
        raise DataError("no events: the objective needs at least one observed event")
    _, _, grad = objective_terms(
        model.standardize(dataset.covariates),
        model.beta,
        dataset.event_time,
        dataset.event_indicator,
        dataset.protected,
        penalty,
        lam,
    )
    return grad


def _batches(n: int, config: TrainConfig, rng: np.random.Generator, n_pair_rows: int | None):
    """(training rows, pair rows) per step; pair rows are None without a pair set."""
    n_batches = max(1, -(-n // config.batch_size))
    for _ in range(config.epochs):
        rows = np.array_split(rng.permutation(n), n_batches)
        if n_pair_rows is None:
            yield from ((batch, None) for batch in rows)
        else:
            yield from zip(rows, np.array_split(rng.permutation(n_pair_rows), n_batches))


def _pair_matrix(
    pair_covariates, penalty: FairnessPenalty | None, dataset: SurvivalDataset
) -> np.ndarray | None:
    if pair_covariates is None or penalty is None:
        return None
    if penalty.kind is not PenaltyKind.INDIVIDUAL:
        raise ConfigError(
            f"a separate pair set applies to the individual penalty, not {penalty.kind.value}"
        )
    X = np.asarray(pair_covariates, dtype=float)
    if X.ndim != 2 or X.shape[1] != dataset.n_features:
        raise DataError(
            f"pair covariates must have {dataset.n_features} columns, got shape {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise DataError("pair covariates contain NaN or infinite values")
    return X


def train(
    dataset: SurvivalDataset,
    penalty: FairnessPenalty | None,
    config: TrainConfig,
    pair_covariates: np.ndarray | None = None,
) -> tuple[CoxModel, TrainReport]:
    """Minimize the fair Cox objective with Adam from beta = 0.

    Deterministic given `config.seed`; with lambda = 0 the penalty argument is
    ignored. `pair_covariates` (raw covariates, e.g. the subjects to be scored)
    moves the individual penalty off the training rows onto that set; in
    mini-batch mode it is batched alongside the training rows.
    """
    if dataset.n_events == 0:
        raise DataError("no events: cannot train a Cox model")
    penalty = penalty if config.lam > 0 else None
    if config.lam > 0 and penalty is None:
        raise ConfigError("a fairness penalty is required when lambda > 0")
    if penalty is not None:
        require_penalty_attributes(penalty, dataset)
    pair_X = _pair_matrix(pair_covariates, penalty, dataset)
    regime = config.resolved_regime(penalty)
    if (
        penalty is not None
        and penalty.kind is PenaltyKind.INDIVIDUAL
        and regime is Regime.MINI_BATCH
        and config.batch_size < 2
    ):
        raise ConfigError("individual fairness needs mini-batches of at least 2 subjects")

    started = time.perf_counter()
    means, scales = standardizer_from(dataset)
    model = CoxModel.zeros(means, scales, dataset.feature_names)
    Z = model.standardize(dataset.covariates)
    event_time = dataset.event_time
    event = dataset.event_indicator
    protected = dataset.protected
    pair_Z = None if pair_X is None else model.standardize(pair_X)

    if regime is Regime.FULL_BATCH:
        steps = ((slice(None), slice(None)) for _ in range(config.iterations))
    else:
        rng = np.random.Generator(np.random.PCG64(config.seed))
        n_pair_rows = None if pair_Z is None else pair_Z.shape[0]
        steps = _batches(dataset.n_subjects, config, rng, n_pair_rows)

    optimizer = Adam(
        dataset.n_features,
        lr=config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        epsilon=config.adam_epsilon,
    )
    beta = np.zeros(dataset.n_features)
    loss_trace: list[float] = []
    penalty_trace: list[float] = []
    for iteration, (rows, pair_rows) in enumerate(steps):
        try:
            value, penalty_value, grad = objective_terms(
                Z[rows],
                beta,
                event_time[rows],
                event[rows],
                {name: column[rows] for name, column in protected.items()},
                penalty,
                config.lam,
                warn=iteration == 0,
                pair_Z=None if pair_Z is None else pair_Z[pair_rows],
            )
        except NumericalError as exc:
            raise NumericalError(f"training diverged at iteration {iteration}: {exc}") from exc
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise NumericalError(
                f"training diverged at iteration {iteration}: objective {value}"
            )
        loss_trace.append(value)
        penalty_trace.append(penalty_value)
        beta = optimizer.step(beta, grad)

    if not np.all(np.isfinite(beta)):
        raise NumericalError("training diverged: final coefficients are not finite")
    model = model.with_beta(beta)
    _, _, final_grad = objective_terms(
        Z, beta, event_time, event, protected, penalty, config.lam, warn=False, pair_Z=pair_Z
    )
    report = TrainReport(
        final_beta=beta,
        loss_trace=np.asarray(loss_trace),
        penalty_trace=np.asarray(penalty_trace),
        wall_time=time.perf_counter() - started,
        regime=regime,
        gradient_norm=float(np.max(np.abs(final_grad))),
    )
    kind = penalty.kind.value if penalty is not None else "none"
    logger.info(
        f"Trained penalty={kind} lambda={config.lam:g} ({regime.value}, "
        f"{report.n_steps} steps): objective {report.final_objective:.4f}, "
        f"|grad|_inf {report.gradient_norm:.2e}"
    )
    return model, report
