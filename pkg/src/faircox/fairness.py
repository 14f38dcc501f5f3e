"""Individual, group and intersectional fairness for Cox models.

Each measure works on relative hazards h(x) = exp(beta . x~) and is available
both as an evaluation metric and as a training penalty with an exact
subgradient. Max operators differentiate through the first attaining element
in enumeration order; hinge and absolute-value kinks get a zero subgradient.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from faircox.errors import ConfigError, DataError, NumericalError
from faircox.survival.models import CoxModel, SurvivalDataset

logger = logging.getLogger(__name__)

# Rows per block when enumerating pairs for individual fairness.
PAIR_BLOCK_ROWS = 512


class PenaltyKind(str, Enum):
    INDIVIDUAL = "individual"
    GROUP = "group"
    INTERSECTIONAL = "intersectional"


MEASURE_FOR_KIND = {
    PenaltyKind.INDIVIDUAL: "F_i",
    PenaltyKind.GROUP: "F_g",
    PenaltyKind.INTERSECTIONAL: "F_eps",
}


@dataclass(frozen=True)
class ProtectedSpace:
    """Cross product of the code sets of several protected attributes."""
    attributes: tuple[str, ...]
    codes: tuple[tuple[int, ...], ...]
    min_subgroup_count: int = 1
    subgroups: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self) -> None:
        attributes = tuple(self.attributes)
        codes = tuple(tuple(int(c) for c in group) for group in self.codes)
        if not attributes:
            raise ConfigError("a protected space needs at least one attribute")
        if len(codes) != len(attributes):
            raise ConfigError("one code set is required per protected attribute")
        if any(len(group) == 0 for group in codes):
            raise ConfigError("protected code sets must be nonempty")
        if self.min_subgroup_count < 1:
            raise ConfigError("min_subgroup_count must be at least 1")
        object.__setattr__(self, "attributes", attributes)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "subgroups", tuple(itertools.product(*codes)))

    @classmethod
    def from_dataset(
        cls,
        dataset: SurvivalDataset,
        attributes: Sequence[str] | None = None,
        min_subgroup_count: int = 1,
    ) -> "ProtectedSpace":
        names = tuple(attributes) if attributes else tuple(dataset.protected)
        unknown = [name for name in names if name not in dataset.protected]
        if unknown:
            raise ConfigError(f"unknown protected attributes: {', '.join(unknown)}")
        return cls(
            attributes=names,
            codes=tuple(dataset.protected_codes[name] for name in names),
            min_subgroup_count=min_subgroup_count,
        )


@dataclass(frozen=True)
class FairnessPenalty:
    kind: PenaltyKind
    distance_scale: float | None = None
    group_attribute: str | None = None
    space: ProtectedSpace | None = None
    # divide the individual hinge sum by the number of pairs
    normalize_pairs: bool = True

    def __post_init__(self) -> None:
        kind = PenaltyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is not PenaltyKind.INDIVIDUAL and not self.normalize_pairs:
            raise ConfigError(
                f"normalize_pairs applies to the individual penalty, not {kind.value}"
            )
        if kind is PenaltyKind.INDIVIDUAL:
            if self.distance_scale is None or not self.distance_scale > 0:
                raise ConfigError("individual penalty needs a positive distance_scale")
            if self.group_attribute is not None or self.space is not None:
                raise ConfigError("individual penalty takes no protected attributes")
        elif kind is PenaltyKind.GROUP:
            if not self.group_attribute or self.space is None:
                raise ConfigError("group penalty needs group_attribute and space")
            if self.group_attribute not in self.space.attributes:
                raise ConfigError(
                    f"group attribute {self.group_attribute!r} is not in the protected space"
                )
            if self.distance_scale is not None:
                raise ConfigError("group penalty takes no distance_scale")
        else:
            if self.space is None:
                raise ConfigError("intersectional penalty needs a protected space")
            if self.distance_scale is not None or self.group_attribute is not None:
                raise ConfigError("intersectional penalty takes only a protected space")

    @property
    def measure_name(self) -> str:
        return MEASURE_FOR_KIND[self.kind]


def _hazards(Z: np.ndarray, beta: np.ndarray) -> np.ndarray:
    h = np.exp(Z @ beta)
    if not np.all(np.isfinite(h)):
        raise NumericalError("relative hazards are not finite")
    return h


def individual_terms(
    Z: np.ndarray,
    beta: np.ndarray,
    distance_scale: float,
    with_gradient: bool = True,
    warn: bool = True,
    normalize: bool = True,
) -> tuple[float, np.ndarray]:
    """Sum over pairs i < j of max(0, |h_i - h_j| - scale * ||z_i - z_j||).

    With `normalize` the sum (and its subgradient) is divided by the pair count.
    """
    n = Z.shape[0]
    grad = np.zeros(Z.shape[1])
    if n < 2:
        if warn:
            logger.warning("Individual fairness needs at least two subjects; returning 0")
        return 0.0, grad
    h = _hazards(Z, beta)
    n_pairs = n * (n - 1) / 2 if normalize else 1.0
    total = 0.0
    coef = np.zeros(n)
    for start in range(0, n, PAIR_BLOCK_ROWS):
        stop = min(start + PAIR_BLOCK_ROWS, n)
        diff = h[start:stop, None] - h[None, start:]
        excess = np.abs(diff) - distance_scale * cdist(Z[start:stop], Z[start:])
        upper = np.arange(n - start)[None, :] > np.arange(stop - start)[:, None]
        active = upper & (excess > 0)
        total += float(excess[active].sum())
        if with_gradient:
            signs = np.where(active, np.sign(diff), 0.0)
            coef[start:stop] += signs.sum(axis=1)
            coef[start:] -= signs.sum(axis=0)
    if with_gradient:
        grad = Z.T @ (coef * h) / n_pairs
    return total / n_pairs, grad


def group_terms(
    Z: np.ndarray,
    beta: np.ndarray,
    column: np.ndarray,
    codes: Sequence[int],
    min_count: int = 1,
    warn: bool = True,
) -> tuple[float, np.ndarray]:
    """max over groups of |mean_group h - mean_all h|."""
    h = _hazards(Z, beta)
    hZ = h[:, None] * Z
    population = h.mean()
    population_grad = hZ.mean(axis=0)
    best_value = -1.0
    best_grad = np.zeros(Z.shape[1])
    for code in codes:
        members = column == code
        count = int(members.sum())
        if count < min_count:
            if warn:
                logger.warning(f"Skipping group {code}: {count} members (< {min_count})")
            continue
        gap = h[members].mean() - population
        if abs(gap) > best_value:
            best_value = abs(gap)
            best_grad = np.sign(gap) * (hZ[members].mean(axis=0) - population_grad)
    if best_value < 0:
        raise DataError("no group has enough members to measure group fairness")
    return float(best_value), best_grad


def intersectional_terms(
    Z: np.ndarray,
    beta: np.ndarray,
    protected: Mapping[str, np.ndarray],
    space: ProtectedSpace,
    warn: bool = True,
) -> tuple[float, np.ndarray]:
    """max over subgroup pairs of |log mean h(s_i) - log mean h(s_j)|."""
    h = _hazards(Z, beta)
    hZ = h[:, None] * Z
    columns = np.column_stack([protected[name] for name in space.attributes])
    log_means: list[float] = []
    log_grads: list[np.ndarray] = []
    for subgroup in space.subgroups:
        members = np.all(columns == np.asarray(subgroup), axis=1)
        count = int(members.sum())
        if count < space.min_subgroup_count:
            if warn and count > 0:
                logger.warning(
                    f"Excluding subgroup {subgroup}: {count} members "
                    f"(< {space.min_subgroup_count})"
                )
            continue
        mean_hazard = h[members].mean()
        log_means.append(float(np.log(mean_hazard)))
        log_grads.append(hZ[members].mean(axis=0) / mean_hazard)
    if len(log_means) < 2:
        raise DataError(
            f"intersectional fairness needs two populated subgroups, found {len(log_means)}"
        )
    best_value = -1.0
    best_grad = np.zeros(Z.shape[1])
    for i, j in itertools.combinations(range(len(log_means)), 2):
        gap = log_means[i] - log_means[j]
        if abs(gap) > best_value:
            best_value = abs(gap)
            best_grad = np.sign(gap) * (log_grads[i] - log_grads[j])
    return float(best_value), best_grad


def _require_attribute(dataset: SurvivalDataset, attribute: str) -> None:
    if attribute not in dataset.protected:
        raise ConfigError(f"unknown protected attribute {attribute!r}")


def require_penalty_attributes(penalty: FairnessPenalty, dataset: SurvivalDataset) -> None:
    """Raise ConfigError unless `dataset` carries every attribute `penalty` groups on."""
    if penalty.kind is PenaltyKind.GROUP:
        _require_attribute(dataset, penalty.group_attribute)
    elif penalty.kind is PenaltyKind.INTERSECTIONAL:
        for name in penalty.space.attributes:
            _require_attribute(dataset, name)


def individual_fairness(
    model: CoxModel,
    X: np.ndarray,
    distance_scale: float = 1.0,
    normalize_pairs: bool = True,
) -> float:
    if not distance_scale > 0:
        raise ConfigError("distance_scale must be positive")
    value, _ = individual_terms(
        model.standardize(X),
        model.beta,
        distance_scale,
        with_gradient=False,
        normalize=normalize_pairs,
    )
    return value


def group_fairness(
    model: CoxModel,
    dataset: SurvivalDataset,
    attribute: str,
    min_subgroup_count: int = 1,
) -> float:
    _require_attribute(dataset, attribute)
    value, _ = group_terms(
        model.standardize(dataset.covariates),
        model.beta,
        dataset.protected[attribute],
        dataset.protected_codes[attribute],
        min_subgroup_count,
    )
    return value


def intersectional_fairness(
    model: CoxModel, dataset: SurvivalDataset, space: ProtectedSpace
) -> float:
    for name in space.attributes:
        _require_attribute(dataset, name)
    value, _ = intersectional_terms(
        model.standardize(dataset.covariates), model.beta, dataset.protected, space
    )
    return value


def penalty_terms(
    penalty: FairnessPenalty,
    Z: np.ndarray,
    beta: np.ndarray,
    protected: Mapping[str, np.ndarray],
    warn: bool = True,
) -> tuple[float, np.ndarray]:
    """Penalty value and subgradient on standardized covariates."""
    if penalty.kind is PenaltyKind.INDIVIDUAL:
        return individual_terms(
            Z, beta, penalty.distance_scale, warn=warn, normalize=penalty.normalize_pairs
        )
    if penalty.kind is PenaltyKind.GROUP:
        attribute = penalty.group_attribute
        codes = penalty.space.codes[penalty.space.attributes.index(attribute)]
        return group_terms(
            Z, beta, protected[attribute], codes, penalty.space.min_subgroup_count, warn=warn
        )
    return intersectional_terms(Z, beta, protected, penalty.space, warn=warn)


def penalty_value_and_subgradient(
    penalty: FairnessPenalty,
    model: CoxModel,
    batch: SurvivalDataset,
    warn: bool = True,
) -> tuple[float, np.ndarray]:
    require_penalty_attributes(penalty, batch)
    return penalty_terms(
        penalty, model.standardize(batch.covariates), model.beta, batch.protected, warn=warn
    )


@dataclass(frozen=True)
class FairnessAudit:
    """Everything needed to compute the three fairness measures on a split."""
    group_attribute: str
    space: ProtectedSpace
    distance_scale: float = 1.0
    normalize_pairs: bool = True

    def __post_init__(self) -> None:
        if not self.distance_scale > 0:
            raise ConfigError("distance_scale must be positive")

    @classmethod
    def from_dataset(
        cls,
        dataset: SurvivalDataset,
        group_attribute: str | None = None,
        attributes: Sequence[str] | None = None,
        distance_scale: float = 1.0,
        min_subgroup_count: int = 1,
        normalize_pairs: bool = True,
    ) -> "FairnessAudit":
        if not dataset.protected:
            raise ConfigError("the dataset declares no protected attributes")
        space = ProtectedSpace.from_dataset(dataset, attributes, min_subgroup_count)
        group = group_attribute or space.attributes[0]
        _require_attribute(dataset, group)
        return cls(
            group_attribute=group,
            space=space,
            distance_scale=distance_scale,
            normalize_pairs=normalize_pairs,
        )

    def penalty(self, kind: PenaltyKind | str) -> FairnessPenalty:
        kind = PenaltyKind(kind)
        if kind is PenaltyKind.INDIVIDUAL:
            return FairnessPenalty(
                kind, distance_scale=self.distance_scale, normalize_pairs=self.normalize_pairs
            )
        if kind is PenaltyKind.GROUP:
            return FairnessPenalty(kind, group_attribute=self.group_attribute, space=self.space)
        return FairnessPenalty(kind, space=self.space)

    def measure(self, model: CoxModel, dataset: SurvivalDataset) -> dict[str, float]:
        return {
            "F_i": individual_fairness(
                model, dataset.covariates, self.distance_scale, self.normalize_pairs
            ),
            "F_g": group_fairness(
                model, dataset, self.group_attribute, self.space.min_subgroup_count
            ),
            "F_eps": intersectional_fairness(model, dataset, self.space),
        }
