"""Simulation, expansion, and verification lab for a self-organizing
mean-field spin model with Gaussian reference law."""

__version__ = "0.1.0"

from .model import ModelParams, ScalingSchedule  # noqa: F401
