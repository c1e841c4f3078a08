"""Exception hierarchy shared by all engine modules.

Every error carries a machine-readable ``code`` plus a human message, and
optionally a ``location`` (a JSON-path-like string pointing into the input
that caused it).  The API layer maps these onto HTTP statuses.
"""

from __future__ import annotations


class StagecraftError(Exception):
    """Base class for all engine errors."""

    def __init__(self, code: str, message: str, location: str | None = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.location = location

    def __repr__(self) -> str:
        loc = f", location={self.location!r}" if self.location else ""
        return f"{type(self).__name__}(code={self.code!r}, message={self.message!r}{loc})"


class DomainError(StagecraftError):
    """An operation was applied outside its semantic domain."""


class PreconditionError(StagecraftError):
    """A stated precondition of an operation does not hold."""


class FormatError(StagecraftError):
    """A document failed to parse or validate."""


class StructuralError(StagecraftError):
    """A stage graph (or similar composite) is malformed."""


class BudgetExceededError(StagecraftError):
    """A resource budget (node count, step cap, wall clock) ran out."""

    def __init__(self, code: str, message: str, *, size_reached: int | None = None):
        super().__init__(code, message)
        self.size_reached = size_reached
