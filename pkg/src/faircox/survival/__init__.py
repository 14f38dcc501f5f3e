"""Survival data types and Cox partial likelihood."""

from faircox.survival.likelihood import (
    breslow_baseline,
    neg_log_partial_likelihood,
    neg_log_partial_likelihood_gradient,
    relative_hazard,
    risk_set,
    survival_curves,
    survival_probability,
)
from faircox.survival.models import (
    BaselineHazard,
    CoxModel,
    SurvivalDataset,
    standardizer_from,
)

__all__ = [
    "BaselineHazard",
    "CoxModel",
    "SurvivalDataset",
    "breslow_baseline",
    "neg_log_partial_likelihood",
    "neg_log_partial_likelihood_gradient",
    "relative_hazard",
    "risk_set",
    "standardizer_from",
    "survival_curves",
    "survival_probability",
]
