"""Stagecraft: a verification and exploration workbench for population
protocols built around stage graphs, linear-constraint certificates, and a
brute-force oracle."""

from .errors import (
    BudgetExceededError,
    DomainError,
    FormatError,
    PreconditionError,
    StagecraftError,
    StructuralError,
)
from .model import Configuration, Interaction, Predicate, Protocol, Transition

__version__ = "0.1.0"

__all__ = [
    "BudgetExceededError",
    "Configuration",
    "DomainError",
    "FormatError",
    "Interaction",
    "Predicate",
    "PreconditionError",
    "Protocol",
    "StagecraftError",
    "StructuralError",
    "Transition",
    "__version__",
]
