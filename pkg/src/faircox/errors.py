"""Exception types raised across faircox."""
from __future__ import annotations


class FairCoxError(Exception):
    """Base class for every error faircox raises on purpose."""


class ConfigError(FairCoxError, ValueError):
    """Invalid configuration, schema, arguments or missing input files."""


class DataError(FairCoxError, ValueError):
    """Data that breaks a dataset invariant or cannot support an operation."""


class NumericalError(FairCoxError, ArithmeticError):
    """Divergence, non-finite values or exhausted numerical support."""
