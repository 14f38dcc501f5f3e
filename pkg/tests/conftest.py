"""Shared fixtures for the faircox test suite."""
import logging

import pytest

from faircox.data import SyntheticSpec, generate_synthetic


@pytest.fixture(autouse=True)
def enable_log_capture():
    """Enable log propagation for caplog to capture logs during tests."""
    logger = logging.getLogger("faircox")
    original_propagate = logger.propagate
    logger.propagate = True
    yield
    logger.propagate = original_propagate


@pytest.fixture
def small_synthetic():
    """20 subjects, three covariates, both protected attributes."""
    return generate_synthetic(SyntheticSpec(n=20, beta_true=(0.5, -0.3, 0.2), seed=3))


@pytest.fixture
def biased_synthetic():
    """Group g1 has doubled hazard and a shifted first covariate."""
    return generate_synthetic(
        SyntheticSpec(
            n=400,
            beta_true=(1.0, -0.5),
            group_bias={"g1": 2.0},
            proxy_shift=1.5,
            seed=11,
        )
    )
