"""
Path: engine/app/errors.py
Purpose: Exception hierarchy shared by services and the CLI
Logic:
  - Validation-type failures subclass ValueError so plain `except ValueError` callers keep working
  - Numeric failures subclass ArithmeticError and carry the offending time when known
  - The CLI maps ValueError-type errors to exit 1 and numeric errors to exit 2
"""

from typing import Optional


class BranchingError(Exception):
    """Root of all errors raised by the engine"""


class DomainError(BranchingError, ValueError):
    """Argument outside the mathematical domain (negative lambda, bad probability vector, ...)"""


class ConfigError(BranchingError, ValueError):
    """Malformed, unknown-key or missing configuration / mechanism file"""


class PreconditionError(BranchingError, ValueError):
    """A theorem hypothesis required by the operation does not hold"""


class NumericError(BranchingError, ArithmeticError):
    """Numerical breakdown during integration or simulation"""

    def __init__(self, message: str, time: Optional[float] = None):
        if time is not None:
            message = f"{message} (t={time:.6g})"
        super().__init__(message)
        self.time = time


class StepSizeError(NumericError):
    """Tau-leap step too coarse for the current jump rates"""


class ConsistencyError(NumericError):
    """Two independent computations of the same quantity disagree"""


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit status."""
    if isinstance(exc, (NumericError, ArithmeticError)):
        return EXIT_NUMERIC
    return EXIT_VALIDATION
