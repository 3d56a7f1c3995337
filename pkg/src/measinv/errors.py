"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes, so library code should raise the
most specific one that applies rather than a bare ValueError.
"""

from __future__ import annotations

__all__ = ["ConfigError", "NumericalError", "CFLViolation", "DataFormatError"]


class ConfigError(ValueError):
    """Bad or inconsistent run configuration (unknown key, range violation)."""


class NumericalError(RuntimeError):
    """A solver left its validity envelope (divergence, lost positivity, ...)."""


class CFLViolation(NumericalError):
    """The step constant is too large for the current velocity field.

    Kept separate from plain NumericalError so optimizers can treat a
    trial point outside the operator's validity region as rejectable
    instead of fatal.
    """


class DataFormatError(OSError):
    """An on-disk artifact does not match its declared format."""
