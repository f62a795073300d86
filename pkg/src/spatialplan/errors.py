"""Exception types shared across the planning toolkit."""

from __future__ import annotations


class PlanningError(Exception):
    """Base class for all planner-specific failures."""


class ScenarioError(PlanningError):
    """Scenario file is malformed, incomplete, or carries unknown keys."""

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class OutOfDomainError(PlanningError):
    """A coordinate falls outside the represented road segment."""


class PoleViolationError(PlanningError):
    """An operating point violates the singularity guards of the road-aligned model.

    Raised when cos(e_psi) or (1 - kappa * e_y) drops below the admissible
    threshold, which would put the dynamics near a pole.
    """


class CorridorBlockedError(PlanningError):
    """An obstacle leaves no free lateral corridor on some grid interval."""

    def __init__(self, message: str, interval: int):
        self.interval = interval
        super().__init__(message)


class HorizonExhaustedError(PlanningError):
    """The lane ends before the requested horizon can be generated."""

    def __init__(self, message: str, max_steps: int):
        self.max_steps = max_steps
        super().__init__(message)


class SolveFailedError(PlanningError):
    """An optimization pass did not return an optimal solution."""

    def __init__(self, message: str, status: str, diagnostics: dict | None = None):
        self.status = status
        self.diagnostics = diagnostics or {}
        super().__init__(message)
