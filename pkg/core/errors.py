"""
core/errors.py
~~~~~~~~~~~~~~
Exception hierarchy.

Input problems subclass ``ValueError`` too, so callers that only care about
"bad input" can catch that.
"""

from __future__ import annotations


class SagrapeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SagrapeError, ValueError):
    """Run configuration is unreadable or invalid.

    ``key`` holds the dotted key path (``rfi.probs``) when known.
    """

    def __init__(self, message: str, key: str | None = None) -> None:
        super().__init__(message)
        self.key = key


class SpinSystemError(SagrapeError, ValueError):
    """Spin-system parameters violate their invariants."""


class OperatorError(SagrapeError, ValueError):
    """Bad operator input: non-Hermitian, wrong shape, index out of range."""


class PulseError(SagrapeError, ValueError):
    """Invalid pulse sequence, RFI distribution, noise trajectory or CPMG layout."""


class ObjectiveError(SagrapeError, ValueError):
    """Fidelity cannot be defined for the given task (zero norm, wrong kind)."""


class AnnealError(SagrapeError, ValueError):
    """Invalid annealing schedule parameters."""


class NumericalError(SagrapeError, ArithmeticError):
    """A fidelity or gradient evaluation produced non-finite values."""


class FitError(SagrapeError):
    """T2 decay fit could not be performed."""


class ShapeFormatError(SagrapeError, ValueError):
    """Malformed shape file. ``line`` is 1-based, or None for file-level problems."""

    def __init__(self, message: str, line: int | None = None) -> None:
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
        self.detail = message
