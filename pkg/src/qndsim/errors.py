"""Exception types raised by the simulation modules.

The CLI maps each family onto a process exit code, so every module error
derives from :class:`QNDError`.
"""

from __future__ import annotations


class QNDError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidInputError(QNDError, ValueError):
    """A parameter or array violates an operation's precondition."""

    exit_code = 2


class ConfigError(InvalidInputError):
    """A run configuration document is malformed or fails validation."""

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"{field}: {constraint}")


class SolverError(QNDError):
    """The eigensolver did not reach the residual tolerance."""

    exit_code = 3

    def __init__(self, message: str, worst_residual: float):
        self.worst_residual = worst_residual
        super().__init__(f"{message} (worst residual {worst_residual:.3e})")


class DegeneracyError(QNDError):
    """Two levels are too close for a reformation time to be defined."""

    exit_code = 4


class DegenerateRunError(QNDError):
    """A measurement sequence cannot continue.

    ``partial`` holds whatever part of the record was completed before the
    failure (a :class:`~qndsim.sequence.SequenceResult` or ``None``).
    """

    exit_code = 4

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)


class AnnihilatedStateError(DegenerateRunError):
    """A kernel application left a state with zero norm."""


class DegenerateDensityError(DegenerateRunError):
    """Every candidate result has zero probability weight."""
