"""Planned trajectory containers shared by the planner and the harness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SpatialTrajectory:
    """States, controls, and times along the spatial grid.

    ``N+1`` states and times, ``N`` controls. ``eta`` is the integrated length
    of the actually driven path (``None`` when road curvature was unavailable
    at extraction time).
    """

    stations: np.ndarray
    e_psi: np.ndarray
    e_y: np.ndarray
    q: np.ndarray
    delta: np.ndarray
    t: np.ndarray
    slacks: dict = field(default_factory=dict)
    objective: dict = field(default_factory=dict)
    eta: float | None = None

    def __post_init__(self):
        n = len(self.q)
        if not (len(self.stations) == len(self.e_psi) == len(self.e_y)
                == len(self.t) == n + 1):
            raise ValueError("need N+1 states/times for N controls")
        if len(self.delta) != n:
            raise ValueError("control channels must have equal length")

    @property
    def v(self) -> np.ndarray:
        return 1.0 / self.q

    @property
    def traversal_time(self) -> float:
        return float(self.t[-1] - self.t[0])

    def time_strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.t) > 0.0))

    def max_slack(self) -> float:
        return max(self.slacks.values(), default=0.0)
