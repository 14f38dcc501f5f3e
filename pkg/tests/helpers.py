"""Small builders shared by the tests."""
import numpy as np

from faircox.survival import CoxModel, SurvivalDataset


def unit_model(beta):
    """Model whose standardization is the identity, so x~ = x."""
    beta = np.asarray(beta, dtype=float)
    names = tuple(f"x{k}" for k in range(beta.size))
    return CoxModel(beta, np.zeros(beta.size), np.ones(beta.size), names)


def make_dataset(covariates, times, events=None, protected=None, codes=None):
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim == 1:
        covariates = covariates.reshape(-1, 1)
    times = np.asarray(times, dtype=float)
    events = np.ones(times.size, dtype=bool) if events is None else np.asarray(events, dtype=bool)
    return SurvivalDataset(
        covariates=covariates,
        event_time=times,
        event_indicator=events,
        feature_names=tuple(f"x{k}" for k in range(covariates.shape[1])),
        protected=protected or {},
        protected_codes=codes or {},
    )
