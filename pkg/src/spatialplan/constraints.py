"""Constraint row generation for the spatial-domain planner.

Covers control-rate rows (steering exact, speed linearized in the inverse
speed), corridor rows shrunk by the vehicle-dimension margin heuristic,
scheduled-waypoint time rows, and the per-station friction speed limit used by
the second planning pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import SpatialGrid
from .model import ControlSample, VehicleParams

CURVATURE_FLOOR = 1e-6  # 1/m, below this the lateral friction limit is uncapped


@dataclass(frozen=True)
class RateRow:
    """One control-rate constraint between consecutive controls.

    ``later`` is the index of the later control of the pair. The initial row
    (anchoring control 0 against the previously applied control) has
    ``later == 0`` and ``coef_earlier == 0`` with the earlier value folded
    into the bounds.
    """

    later: int
    coef_later: float
    coef_earlier: float
    lower: float
    upper: float
    channel: str  # "speed" | "steer"

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("rate row requires lower <= upper")


def rate_rows(grid: SpatialGrid, q_ref, params: VehicleParams,
              rate_window: float, u_prev: ControlSample) -> list[RateRow]:
    """Channel-separated control-rate rows over the grid.

    Steering rows are exact and linear. Speed rows bound the change of
    ``1/q`` and are linearized about ``q_ref`` so they hold exactly at the
    reference. ``rate_window`` is the time window the rate bounds are scaled
    by (typically the tracking sampling time).
    """
    if rate_window <= 0.0:
        raise ValueError("rate_window must be positive")
    q_ref = np.asarray(q_ref, dtype=float)
    if np.any(q_ref <= 0.0):
        raise ValueError("reference inverse speeds must be positive")
    n = grid.n_intervals
    if len(q_ref) != n:
        raise ValueError("need one reference inverse speed per control station")

    dv_lo = rate_window * params.accel_min
    dv_hi = rate_window * params.accel_max
    dd_lo = rate_window * params.steer_rate_min
    dd_hi = rate_window * params.steer_rate_max

    rows = [
        RateRow(later=0, coef_later=1.0, coef_earlier=0.0,
                lower=dd_lo + u_prev.delta, upper=dd_hi + u_prev.delta,
                channel="steer"),
        RateRow(later=0, coef_later=-1.0 / q_ref[0] ** 2, coef_earlier=0.0,
                lower=dv_lo - 2.0 / q_ref[0] + u_prev.v,
                upper=dv_hi - 2.0 / q_ref[0] + u_prev.v,
                channel="speed"),
    ]
    for j in range(n - 1):
        rows.append(RateRow(later=j + 1, coef_later=1.0, coef_earlier=-1.0,
                            lower=dd_lo, upper=dd_hi, channel="steer"))
        shift = 2.0 * (1.0 / q_ref[j + 1] - 1.0 / q_ref[j])
        rows.append(RateRow(
            later=j + 1,
            coef_later=-1.0 / q_ref[j + 1] ** 2,
            coef_earlier=1.0 / q_ref[j] ** 2,
            lower=dv_lo - shift,
            upper=dv_hi - shift,
            channel="speed",
        ))
    return rows


def rate_residuals_nonlinear(grid: SpatialGrid, e_psi, e_y, q, delta,
                             road_curvature, params: VehicleParams) -> dict:
    """Diagnostic: actual control changes against the state-dependent rate bounds.

    Evaluates the full (state- and speed-dependent) spatial rate bounds and
    returns the worst violation per channel. Reporting only; the planner's
    rows use the channel-separated form.
    """
    q = np.asarray(q)
    delta = np.asarray(delta)
    n = len(q)
    e_psi = np.asarray(e_psi)[:n]
    e_y = np.asarray(e_y)[:n]
    kappa = np.asarray(road_curvature)[:n]
    scale = grid.steps[:n] * (1.0 - kappa * e_y) * q / np.cos(e_psi)
    dv = np.diff(1.0 / q)
    dd = np.diff(delta)
    s = scale[:-1]
    speed_violation = np.maximum(dv - s * params.accel_max, s * params.accel_min - dv)
    steer_violation = np.maximum(dd - s * params.steer_rate_max, s * params.steer_rate_min - dd)
    return {
        "speed_violation": float(np.max(speed_violation, initial=0.0)),
        "steer_violation": float(np.max(steer_violation, initial=0.0)),
    }


@dataclass(frozen=True)
class MarginResult:
    """Vehicle-dimension corridor margin and the heading that produced it."""

    margin: float          # m, subtracted from each corridor side
    heading: float         # rad, speed-scaled heading used in the margin
    design_heading: float  # rad, heading before speed scaling
    corridor_too_narrow: bool = False


def margin_at_heading(params: VehicleParams, e_psi: float) -> float:
    """Lateral half-extent of the vehicle body at heading error ``e_psi``."""
    return params.front_length * math.sin(e_psi) + params.half_width * math.cos(e_psi)


def max_margin_heading(params: VehicleParams) -> float:
    """Heading error maximizing the body's lateral extent."""
    return math.atan(params.front_length / params.half_width)


def vehicle_margin(params: VehicleParams, speed: float, speed_limit: float,
                   offset_abs: float, reach: float, reaction_time: float,
                   variant: str = "reaction-time") -> MarginResult:
    """Speed-dependent corridor margin for a rectangular vehicle body.

    ``variant="max-angle"`` uses the worst-case heading. ``"reaction-time"``
    solves for the heading at which the front outer corner reaches the nearest
    road boundary (distance ``reach`` from a vehicle at ``|e_y| = offset_abs``)
    within ``reaction_time`` seconds, which is less conservative. The design
    heading is then scaled by ``speed / speed_limit`` so the margin grows
    monotonically with speed.
    """
    if not (0.0 <= speed <= speed_limit + 1e-9):
        raise ValueError("speed must lie in [0, speed_limit]")
    if reaction_time <= 0.0:
        raise ValueError("reaction_time must be positive")
    if offset_abs < 0.0 or reach <= 0.0:
        raise ValueError("requires reach > 0 and offset_abs >= 0")

    heading_cap = max_margin_heading(params)
    if variant == "max-angle":
        design = heading_cap
    elif variant == "reaction-time":
        a = reaction_time * speed + params.front_length
        b = params.half_width
        c = reach - offset_abs
        if c <= b:
            # Boundary closer than the resting body extent: fall back to the
            # fully conservative margin.
            cap_margin = margin_at_heading(params, heading_cap)
            return MarginResult(margin=cap_margin, heading=heading_cap,
                                design_heading=heading_cap,
                                corridor_too_narrow=True)
        radius = math.hypot(a, b)
        if c >= radius:
            design = heading_cap
        else:
            design = math.asin(c / radius) - math.atan2(b, a)
            design = min(max(design, 0.0), heading_cap)
    else:
        raise ValueError(f"unknown margin variant {variant!r}")

    heading = (speed / speed_limit) * design
    return MarginResult(margin=margin_at_heading(params, heading),
                        heading=heading, design_heading=design)


@dataclass(frozen=True)
class CorridorRow:
    """Effective lateral bounds at one station after the margin shrink."""

    station: int
    lower: float
    upper: float
    crossed: bool  # margin exceeded the free width; the shared slack absorbs it


def corridor_rows(grid: SpatialGrid, lower, upper, margin: float) -> list[CorridorRow]:
    """Corridor rows for stations 1..N with the margin applied on both sides."""
    if margin < 0.0:
        raise ValueError("margin must be nonnegative")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rows = []
    for j in range(1, grid.n_intervals + 1):
        lo = lower[j] + margin
        hi = upper[j] - margin
        rows.append(CorridorRow(station=j, lower=lo, upper=hi, crossed=lo >= hi))
    return rows


@dataclass(frozen=True)
class FrictionProfile:
    """Per-control-station speed caps keeping tire forces inside friction limits."""

    v_max: np.ndarray          # (N,)
    lateral_limit: np.ndarray  # (N,) before the longitudinal-accel passes

    def __post_init__(self):
        if np.any(self.v_max <= 0.0):
            raise ValueError("friction speed caps must be positive")

    @property
    def q_min(self) -> np.ndarray:
        return 1.0 / self.v_max


def speed_limit_profile(curvature_abs, steps, params: VehicleParams,
                        v_cap: float) -> tuple[np.ndarray, np.ndarray]:
    """Friction speed limit along a path with the given |curvature|.

    Combines the lateral friction-circle limit with a backward pass (braking
    feasibility) and a forward pass (acceleration feasibility), then caps at
    ``v_cap``. Returns ``(limit, lateral_only)``.
    """
    kappa = np.maximum(np.abs(np.asarray(curvature_abs, dtype=float)), CURVATURE_FLOOR)
    lateral = np.sqrt(params.friction * params.gravity / kappa)
    limit = np.minimum(lateral, v_cap)
    steps = np.asarray(steps, dtype=float)
    brake = 2.0 * abs(params.accel_min) * steps
    drive = 2.0 * params.accel_max * steps
    for j in range(len(limit) - 2, -1, -1):
        limit[j] = min(limit[j], math.sqrt(limit[j + 1] ** 2 + brake[j]))
    for j in range(len(limit) - 1):
        limit[j + 1] = min(limit[j + 1], math.sqrt(limit[j] ** 2 + drive[j]))
    return limit, np.minimum(lateral, v_cap)


def friction_profile(trajectory, params: VehicleParams, v_cap: float) -> FrictionProfile:
    """Friction speed caps along a planned trajectory's path.

    Path curvature follows from the planned steering through the kinematic
    relation ``tan(delta) / wheelbase``.
    """
    delta = np.asarray(trajectory.delta, dtype=float)
    path_curvature = np.tan(delta) / params.wheelbase
    steps = trajectory.stations[1: len(delta) + 1] - trajectory.stations[: len(delta)]
    limit, lateral = speed_limit_profile(path_curvature, steps, params, v_cap)
    return FrictionProfile(v_max=limit, lateral_limit=lateral)


@dataclass(frozen=True)
class WaypointSpec:
    """A station scheduled to be reached at a given time.

    Optional axis-aligned state boxes constrain the state in which the
    waypoint is traversed.
    """

    station: float
    time: float
    e_psi_range: tuple[float, float] | None = None
    e_y_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class WaypointRow:
    """Waypoint schedule resolved onto a grid station index."""

    index: int
    time: float
    e_psi_range: tuple[float, float] | None
    e_y_range: tuple[float, float] | None


def waypoint_rows(grid: SpatialGrid, waypoints, plan_time: float = 0.0) -> list[WaypointRow]:
    """Resolve waypoint stations onto the grid.

    Every waypoint station must already be a grid station; the grid builder
    accepts them as extra stations to insert.
    """
    rows = []
    for wp in waypoints:
        idx = grid.index_of(wp.station)
        if idx is None:
            raise ValueError(
                f"waypoint station s={wp.station:.3f} is not a grid station; "
                f"pass waypoint stations to the grid builder as extra stations"
            )
        if wp.time <= plan_time:
            raise ValueError(
                f"waypoint time {wp.time:.3f} s must be after plan time {plan_time:.3f} s"
            )
        rows.append(WaypointRow(index=idx, time=wp.time,
                                e_psi_range=wp.e_psi_range, e_y_range=wp.e_y_range))
    return rows
