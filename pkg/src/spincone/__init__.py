"""Spin-1/2 chain toolkit: light-cone sampling of quench dynamics,
free-fermion oracles, shallow-circuit approximations of time evolution,
and windowed thermal-state sweeps for long disordered chains."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    AnalysisError,
    ConfigError,
    InvariantError,
    PositivityError,
    PrecisionError,
    PrecisionLossWarning,
    ResourceLimitError,
    StructureError,
)

__all__ = [
    "__version__",
    "AnalysisError",
    "ConfigError",
    "InvariantError",
    "PositivityError",
    "PrecisionError",
    "PrecisionLossWarning",
    "ResourceLimitError",
    "StructureError",
]
