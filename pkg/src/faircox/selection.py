"""Train/dev/test splitting and the lambda grid search.

Splits use numpy's PCG64 generator seeded with `SplitSpec.seed`, so the same
seed gives the same partition on every platform.
"""
from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from faircox.errors import ConfigError, DataError, FairCoxError
from faircox.fairness import MEASURE_FOR_KIND, FairnessAudit, PenaltyKind
from faircox.metrics import concordance_index
from faircox.optimizer import TrainConfig, TrainReport, train
from faircox.survival.models import CoxModel, SurvivalDataset

logger = logging.getLogger(__name__)

DEFAULT_GRID = (0.01, 0.05, 0.1, 0.4, 0.7, 1.0, 2.0, 5.0, 10.0, 25.0, 50.0)
DEFAULT_MAX_DEGRADATION = 0.05


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.20
    dev_fraction_of_train: float = 0.20
    seed: int = 0
    stratify_on: str | None = None

    def __post_init__(self) -> None:
        for name in ("test_fraction", "dev_fraction_of_train"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {value}")


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    dev: np.ndarray
    test: np.ndarray


def _allocate(indices: np.ndarray, spec: SplitSpec, rng: np.random.Generator):
    shuffled = indices[rng.permutation(indices.size)]
    n_test = _round_half_up(spec.test_fraction * indices.size)
    n_dev = _round_half_up(spec.dev_fraction_of_train * (indices.size - n_test))
    return shuffled[n_test + n_dev:], shuffled[n_test:n_test + n_dev], shuffled[:n_test]


def split_indices(dataset: SurvivalDataset, spec: SplitSpec) -> Split:
    """Disjoint, exhaustive train/dev/test index sets (each sorted)."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    everyone = np.arange(dataset.n_subjects)
    if spec.stratify_on is None:
        train_idx, dev_idx, test_idx = _allocate(everyone, spec, rng)
    else:
        if spec.stratify_on not in dataset.protected:
            raise ConfigError(f"cannot stratify on unknown attribute {spec.stratify_on!r}")
        keys = np.column_stack(
            [dataset.protected[spec.stratify_on], dataset.event_indicator.astype(int)]
        )
        parts: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        for key in np.unique(keys, axis=0):
            members = everyone[np.all(keys == key, axis=1)]
            parts.append(_allocate(members, spec, rng))
        train_idx, dev_idx, test_idx = (np.concatenate(group) for group in zip(*parts))

    split = Split(np.sort(train_idx), np.sort(dev_idx), np.sort(test_idx))
    for name, idx in (("train", split.train), ("dev", split.dev), ("test", split.test)):
        if idx.size == 0 or not dataset.event_indicator[idx].any():
            raise DataError(f"the {name} split has no events; use a larger dataset")
    logger.info(
        f"Split {dataset.n_subjects} subjects into "
        f"{split.train.size}/{split.dev.size}/{split.test.size} (train/dev/test)"
    )
    return split


def split(
    dataset: SurvivalDataset, spec: SplitSpec
) -> tuple[SurvivalDataset, SurvivalDataset, SurvivalDataset]:
    parts = split_indices(dataset, spec)
    return dataset.subset(parts.train), dataset.subset(parts.dev), dataset.subset(parts.test)


@dataclass(frozen=True)
class SweepEntry:
    lam: float
    c_index_dev: float = float("nan")
    fairness: Mapping[str, float] = field(default_factory=dict)
    final_objective: float = float("nan")
    gradient_norm: float = float("nan")
    n_steps: int = 0
    failed: bool = False
    error: str | None = None
    model: CoxModel | None = field(default=None, compare=False, repr=False)

    @property
    def is_baseline(self) -> bool:
        return self.lam == 0


@dataclass(frozen=True)
class SweepResult:
    kind: PenaltyKind
    entries: tuple[SweepEntry, ...]
    max_degradation: float = DEFAULT_MAX_DEGRADATION
    selected_lambda: float | None = None

    @property
    def measure_name(self) -> str:
        return MEASURE_FOR_KIND[self.kind]

    @property
    def baseline(self) -> SweepEntry | None:
        return next((e for e in self.entries if e.is_baseline and not e.failed), None)

    @property
    def selection_rule(self) -> str:
        return (
            f"fairest {self.measure_name} on dev with C-index >= "
            f"{1 - self.max_degradation:g} x typical CPH"
        )

    def entry(self, lam: float) -> SweepEntry:
        for entry in self.entries:
            if entry.lam == lam:
                return entry
        raise KeyError(lam)

    @property
    def selected(self) -> SweepEntry | None:
        return None if self.selected_lambda is None else self.entry(self.selected_lambda)


def select_lambda(
    sweep: SweepResult, max_degradation: float = DEFAULT_MAX_DEGRADATION
) -> float:
    """Fairest lambda whose dev C-index stays within the degradation budget.

    Ties in the fairness measure go to the larger lambda.
    """
    baseline = sweep.baseline
    if baseline is None:
        raise DataError("the sweep has no successful baseline entry")
    if not 0 <= max_degradation < 1:
        raise ConfigError(f"max_degradation must lie in [0, 1), got {max_degradation}")
    threshold = (1 - max_degradation) * baseline.c_index_dev
    measure = sweep.measure_name
    candidates = [
        e for e in sweep.entries
        if not e.failed and e.lam > 0 and e.c_index_dev >= threshold
    ]
    if not candidates:
        logger.warning(
            f"no fair model within budget: no lambda keeps dev C-index >= {threshold:.4f}"
        )
        return 0.0
    best = min(candidates + [baseline], key=lambda e: (e.fairness[measure], -e.lam))
    return best.lam


def _sweep_one(
    lam: float,
    train_set: SurvivalDataset,
    dev_set: SurvivalDataset,
    kind: PenaltyKind,
    config: TrainConfig,
    audit: FairnessAudit,
    pair_covariates: np.ndarray | None = None,
) -> SweepEntry:
    penalty = audit.penalty(kind) if lam > 0 else None
    pairs = pair_covariates if kind is PenaltyKind.INDIVIDUAL else None
    try:
        model, report = train(
            train_set, penalty, dataclasses.replace(config, lam=lam), pair_covariates=pairs
        )
        scores = model.risk_scores(dev_set.covariates)
        c_index = concordance_index(scores, dev_set.event_time, dev_set.event_indicator)
        fairness = audit.measure(model, dev_set)
    except FairCoxError as exc:
        if lam == 0:
            raise
        logger.warning(f"Sweep entry lambda={lam:g} failed: {exc}")
        return SweepEntry(lam=lam, failed=True, error=str(exc))
    return _entry_from(lam, c_index, fairness, report, model)


def _entry_from(
    lam: float,
    c_index: float,
    fairness: Mapping[str, float],
    report: TrainReport,
    model: CoxModel,
) -> SweepEntry:
    return SweepEntry(
        lam=lam,
        c_index_dev=c_index,
        fairness=dict(fairness),
        final_objective=report.final_objective,
        gradient_norm=report.gradient_norm,
        n_steps=report.n_steps,
        model=model,
    )


def lambda_sweep(
    train_set: SurvivalDataset,
    dev_set: SurvivalDataset,
    penalty_kind: PenaltyKind | str,
    grid: Sequence[float],
    config: TrainConfig,
    audit: FairnessAudit,
    max_degradation: float = DEFAULT_MAX_DEGRADATION,
    workers: int = 1,
    pair_covariates: np.ndarray | None = None,
) -> SweepResult:
    """Train one model per lambda (plus the lambda = 0 baseline) and select.

    `pair_covariates` is handed to `train` for the individual penalty only.
    """
    kind = PenaltyKind(penalty_kind)
    if len(grid) == 0:
        raise ConfigError("the lambda grid is empty")
    if any(not np.isfinite(lam) or lam < 0 for lam in grid):
        raise ConfigError("lambda grid values must be finite and >= 0")
    lambdas = sorted({0.0, *(float(lam) for lam in grid)})

    def run(lam: float) -> SweepEntry:
        return _sweep_one(lam, train_set, dev_set, kind, config, audit, pair_covariates)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = tuple(pool.map(run, lambdas))
    else:
        entries = tuple(run(lam) for lam in lambdas)

    result = SweepResult(kind=kind, entries=entries, max_degradation=max_degradation)
    selected = select_lambda(result, max_degradation)
    logger.info(
        f"Selected lambda={selected:g} for {kind.value} penalty "
        f"({sum(e.failed for e in entries)} of {len(entries)} entries failed)"
    )
    return dataclasses.replace(result, selected_lambda=selected)
