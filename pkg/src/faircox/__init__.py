"""faircox - fair Cox proportional hazards models."""
__version__ = "0.1.0"
