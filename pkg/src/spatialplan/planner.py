"""Two-pass time-optimal planner with smooth steering in the spatial domain.

The first pass plans about centerline references. Its trajectory then seeds
the linearization references of a second pass, which additionally caps the
inverse speeds by the friction profile computed along the first-pass path.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import lp as lp_mod
from .assemble import assemble, extract_trajectory
from .constraints import (
    FrictionProfile,
    MarginResult,
    corridor_rows,
    friction_profile,
    rate_rows,
    vehicle_margin,
    waypoint_rows,
)
from .errors import SolveFailedError
from .geometry import SpatialGrid, build_grid, map_obstacles
from .model import (
    EPSI_CLIP,
    RADIUS_GUARD,
    ControlSample,
    ReferenceTrajectory,
    linearize_discretize,
)
from .scenario import Scenario
from .trajectory import SpatialTrajectory


@dataclass
class PlanReport:
    """Both pass results plus the artifacts that shaped the final plan."""

    first_pass: SpatialTrajectory
    final: SpatialTrajectory
    friction: FrictionProfile
    margin: MarginResult
    grid: SpatialGrid
    flags: dict = field(default_factory=dict)
    lp_solves: int = 0
    iterations: tuple = ()
    solve_seconds: float = 0.0

    @property
    def traversal_time(self) -> float:
        return self.final.traversal_time


def init_references(grid: SpatialGrid, start_speed: float) -> ReferenceTrajectory:
    """Centerline references: zero states and steering, inverse start speed."""
    if start_speed <= 0.0:
        raise ValueError("start_speed must be positive")
    n = grid.n_intervals
    return ReferenceTrajectory(
        e_psi=np.zeros(n + 1), e_y=np.zeros(n + 1),
        q=np.full(n, 1.0 / start_speed), delta=np.zeros(n),
    )


def references_from(traj: SpatialTrajectory, road_curvature) -> tuple[ReferenceTrajectory, bool]:
    """References taken from a planned trajectory, clipped to the pole guards."""
    e_psi = np.clip(traj.e_psi, -EPSI_CLIP, EPSI_CLIP)
    e_y = traj.e_y.copy()
    kappa = np.asarray(road_curvature, dtype=float)
    # Pull lateral references toward the centerline wherever they would sit
    # too close to the 1 - kappa*e_y pole.
    factor = 1.0 - kappa * e_y
    bad = factor < RADIUS_GUARD + 0.01
    if np.any(bad):
        limit = (1.0 - (RADIUS_GUARD + 0.01)) / kappa[bad]
        e_y[bad] = np.sign(e_y[bad]) * np.minimum(np.abs(e_y[bad]), np.abs(limit))
    clipped = bool(np.any(bad) or np.any(e_psi != traj.e_psi))
    refs = ReferenceTrajectory(e_psi=e_psi, e_y=e_y, q=traj.q.copy(),
                               delta=traj.delta.copy())
    return refs, clipped


def plan(scenario: Scenario) -> PlanReport:
    """Run the two-pass planner on a scenario."""
    started = _time.perf_counter()
    line, corridor = scenario.build_road()
    start = scenario.start
    horizon = scenario.horizon_length(line)
    grid = build_grid(
        corridor, start.station, horizon, scenario.planner.base_step,
        obstacles=scenario.obstacles,
        extra_stations=[wp.station for wp in scenario.waypoints],
    )
    lower, upper = map_obstacles(corridor, grid, scenario.obstacles,
                                 nominal_speed=start.speed)

    margin = _corridor_margin(scenario, corridor, grid)
    kappa = np.asarray(corridor.centerline.curvature_at(grid.stations), dtype=float)
    z0 = np.array([start.heading_error, start.offset])
    u_prev = ControlSample(q=1.0 / start.speed, delta=0.0)
    cor_rows = corridor_rows(grid, lower, upper, margin.margin)
    wp_rows = waypoint_rows(grid, scenario.waypoints, plan_time=0.0)

    refs = init_references(grid, start.speed)
    traj, iters = _solve_pass(scenario, grid, refs, kappa, z0, u_prev,
                              cor_rows, wp_rows, q_floor=None)
    first_pass = traj
    iterations = [iters]

    friction = friction_profile(first_pass, scenario.vehicle, scenario.v_max)
    refs2, clipped = references_from(first_pass, kappa)
    traj, iters = _solve_pass(scenario, grid, refs2, kappa, z0, u_prev,
                              cor_rows, wp_rows, q_floor=friction.q_min)
    iterations.append(iters)

    for _ in range(scenario.planner.refine_passes):
        friction = friction_profile(traj, scenario.vehicle, scenario.v_max)
        refs_extra, was_clipped = references_from(traj, kappa)
        clipped = clipped or was_clipped
        traj, iters = _solve_pass(scenario, grid, refs_extra, kappa, z0, u_prev,
                                  cor_rows, wp_rows, q_floor=friction.q_min)
        iterations.append(iters)

    flags = {
        "slack_used": traj.max_slack() > 1e-6,
        "corridor_margin_crossed": any(row.crossed for row in cor_rows),
        "corridor_too_narrow": margin.corridor_too_narrow,
        "references_clipped": clipped,
    }
    return PlanReport(
        first_pass=first_pass,
        final=traj,
        friction=friction,
        margin=margin,
        grid=grid,
        flags=flags,
        lp_solves=len(iterations),
        iterations=tuple(iterations),
        solve_seconds=_time.perf_counter() - started,
    )


def _corridor_margin(scenario: Scenario, corridor, grid: SpatialGrid) -> MarginResult:
    if scenario.planner.margin_variant == "none":
        return MarginResult(margin=0.0, heading=0.0, design_heading=0.0)
    raw_lower, raw_upper = corridor.bounds_at(grid.stations)
    reach = float(np.min(np.minimum(raw_upper[1:], np.abs(raw_lower[1:]))))
    return vehicle_margin(
        scenario.vehicle,
        speed=min(scenario.start.speed, scenario.v_max),
        speed_limit=scenario.v_max,
        offset_abs=abs(scenario.start.offset),
        reach=reach,
        reaction_time=scenario.planner.reaction_time,
        variant=scenario.planner.margin_variant,
    )


def _solve_pass(scenario: Scenario, grid: SpatialGrid, refs: ReferenceTrajectory,
                kappa: np.ndarray, z0: np.ndarray, u_prev: ControlSample,
                cor_rows, wp_rows, q_floor):
    plan_cfg = scenario.planner
    stages = linearize_discretize(grid, refs, kappa, kappa, scenario.vehicle)
    rates = rate_rows(grid, refs.q, scenario.vehicle, plan_cfg.rate_window, u_prev)
    lp, _ = assemble(
        stages, z0, tau=0.0, params=scenario.vehicle,
        v_min=scenario.v_min, v_max=scenario.v_max,
        rate=rates, corridor=cor_rows, waypoints=wp_rows,
        slack_weight=plan_cfg.slack_weight,
        terminal_target=(plan_cfg.terminal_heading, plan_cfg.terminal_offset),
        q_floor=q_floor,
        objective_weights=(plan_cfg.time_weight, plan_cfg.steer_peak_weight,
                           plan_cfg.steer_rate_peak_weight),
    )
    sol = lp_mod.solve(lp, max_iterations=plan_cfg.max_iterations)
    if sol.status != "optimal":
        raise SolveFailedError(
            f"planning pass failed: LP status {sol.status}"
            + (f", blocking rows {sol.infeasible_rows}" if sol.infeasible_rows else ""),
            status=sol.status,
            diagnostics={"infeasible_rows": sol.infeasible_rows,
                         "iterations": sol.iterations},
        )
    traj = extract_trajectory(sol, stages, grid, z0, 0.0, lp, road_curvature=kappa)
    return traj, sol.iterations


def validate_open_loop(report: PlanReport, scenario: Scenario) -> dict:
    """Integrate the nonlinear road-aligned dynamics under the planned controls.

    The planned piecewise-constant controls drive the exact spatial equations
    across each grid interval. Returns the worst deviations of the chained
    rollout from the planned states plus the worst single-interval defect
    (the rollout restarted from the planned state at each station), and the
    depth by which the rollout leaves the obstacle-tightened corridor.
    """
    line, corridor = scenario.build_road()
    traj = report.final
    grid = report.grid
    params = scenario.vehicle
    lower, upper = map_obstacles(corridor, grid, scenario.obstacles,
                                 nominal_speed=scenario.start.speed)

    controls = {"q": 0.0, "delta": 0.0}

    def rhs(s, state):
        e_psi, e_y, _ = state
        kappa = line.curvature_at(s)
        cos_epsi = np.cos(e_psi)
        factor = 1.0 - kappa * e_y
        if cos_epsi < 1e-3 or factor < 1e-3:
            raise _PoleCrossed(s)
        return [factor * np.tan(controls["delta"]) / (params.wheelbase * cos_epsi) - kappa,
                factor * np.tan(e_psi),
                factor * controls["q"] / cos_epsi]

    chained = np.empty((len(grid.stations), 3))
    chained[0] = [traj.e_psi[0], traj.e_y[0], traj.t[0]]
    step_defect = 0.0
    try:
        state = chained[0].copy()
        for j in range(grid.n_intervals):
            controls["q"], controls["delta"] = traj.q[j], traj.delta[j]
            span = (grid.stations[j], grid.stations[j + 1])
            sol = solve_ivp(rhs, span, state, rtol=1e-8, atol=1e-10, method="RK45")
            state = sol.y[:, -1]
            chained[j + 1] = state
            planned_start = [traj.e_psi[j], traj.e_y[j], traj.t[j]]
            local = solve_ivp(rhs, span, planned_start, rtol=1e-8, atol=1e-10,
                              method="RK45")
            step_defect = max(step_defect, abs(local.y[1, -1] - traj.e_y[j + 1]))
    except _PoleCrossed as exc:
        return {"ok": False, "pole_crossed_at": float(exc.station)}

    offset_dev = np.abs(chained[:, 1] - traj.e_y)
    time_dev = np.abs(chained[:, 2] - traj.t)
    violation = np.maximum(lower - chained[:, 1], chained[:, 1] - upper)
    return {
        "ok": True,
        "max_offset_deviation": float(np.max(offset_dev)),
        "max_time_deviation": float(np.max(time_dev)),
        "max_step_defect": float(step_defect),
        "corridor_violation_depth": float(np.max(violation, initial=0.0)),
    }


class _PoleCrossed(Exception):
    def __init__(self, station: float):
        self.station = station
        super().__init__(f"pole crossed at s={station:.2f}")
