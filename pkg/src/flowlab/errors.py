"""Exception hierarchy shared by every flowlab module."""

from __future__ import annotations


class FlowlabError(Exception):
    """Base class for all flowlab errors."""


class DomainError(FlowlabError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularityError(FlowlabError, ArithmeticError):
    """A formula would divide by a vanishing schedule quantity."""


class SimulationError(FlowlabError, RuntimeError):
    """An integrator produced a non-finite value."""

    def __init__(self, message: str, x=None, t: float | None = None):
        super().__init__(message)
        self.x = x
        self.t = t


class TrainingError(FlowlabError, RuntimeError):
    """Training diverged (non-finite loss or gradient)."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ConfigError(DomainError):
    """A run configuration is invalid; ``field`` names the offending key."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field
