"""Contrastive domain adaptation for RF device fingerprinting on IQ frames."""

__version__ = "0.1.0"

from .config import ExperimentConfig  # noqa: F401
