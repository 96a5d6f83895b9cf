"""Exception and warning types shared across the package."""

from __future__ import annotations


class StructureError(ValueError):
    """A state or operator lacks the structure an operation requires
    (e.g. a state that is not a tensor product where one is needed)."""


class PrecisionError(RuntimeError):
    """A numerical routine exhausted its budget without reaching its
    accuracy target.  ``achieved`` holds the best error bound reached."""

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class ResourceLimitError(RuntimeError):
    """A requested object exceeds the configured size guards."""


class PositivityError(RuntimeError):
    """Density-matrix positivity was lost during a thermal sweep.
    ``site`` is the chain site being absorbed when the breakdown hit."""

    def __init__(self, message: str, site: int):
        super().__init__(message)
        self.site = site


class AnalysisError(RuntimeError):
    """A curve-analysis routine received data it cannot process
    (e.g. too few oscillation extrema to fit an envelope)."""


class ConfigError(ValueError):
    """A run configuration cannot be parsed or validated.  ``line`` and
    ``column`` locate the offending text (both 1-based; synthetic
    entries such as presets and command-line overrides report 0)."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(message)
        self.line = line
        self.column = column


class InvariantError(RuntimeError):
    """An internal bookkeeping invariant was violated; indicates a bug
    rather than bad input."""


class PrecisionLossWarning(UserWarning):
    """A finite-difference result is small enough that floating-point
    cancellation dominates it."""
