"""Surrogate-assisted calibration of agent-based models."""

__version__ = "0.1.0"
