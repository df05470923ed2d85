"""Simulation-based falsification with priority-aware adaptive sampling."""

from .errors import (
    ConfigError,
    CycleError,
    DomainError,
    FalsifyError,
    SpecError,
    StateError,
)
from .space import Dimension, FeatureSpace, SampleVector

__all__ = [
    "ConfigError",
    "CycleError",
    "Dimension",
    "DomainError",
    "FalsifyError",
    "FeatureSpace",
    "SampleVector",
    "SpecError",
    "StateError",
]

__version__ = "0.1.0"
