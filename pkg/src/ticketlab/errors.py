"""Exception types shared across the package.

Everything raised on purpose derives from TicketLabError so callers can
catch library failures without swallowing genuine bugs.
"""

from __future__ import annotations


class TicketLabError(Exception):
    """Base class for all errors raised by this package."""


class SpecError(TicketLabError, ValueError):
    """A network specification is internally inconsistent (bad dims,
    duplicate group names, kernel constraints, unknown head)."""


class ShapeError(TicketLabError, ValueError):
    """Runtime array shapes do not match what the operation requires."""


class AlignmentError(TicketLabError, ValueError):
    """A mask or gradient collection does not line up with the parameter
    set it is applied to (missing ids, mismatched shapes)."""


class ContractError(TicketLabError, ValueError):
    """A documented precondition was violated by the caller (e.g. params
    handed to a masked step do not already satisfy the mask)."""


class NumericsError(TicketLabError, ArithmeticError):
    """Non-finite values appeared where the contract requires finite ones."""


class TrainingError(TicketLabError, RuntimeError):
    """Training diverged or was otherwise unable to proceed.

    Carries the pruning round index when raised inside an iterative run.
    """

    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index


class FormatError(TicketLabError, ValueError):
    """A serialized checkpoint is malformed (bad magic, truncation,
    non-monotonic sparse indices, size mismatch)."""


class MappingError(TicketLabError, ValueError):
    """A transfer mapping is invalid (unknown ids, shape mismatch,
    incomplete group coverage)."""


class ConfigError(TicketLabError, ValueError):
    """An experiment or task configuration is invalid."""
