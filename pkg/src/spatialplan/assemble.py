"""Condensed assembly of the planning LP and trajectory extraction.

States are eliminated: through the stage recursion every ``z_j`` is an affine
function of the controls, so the LP decides only the inverse speeds, steering
angles, two epigraph scalars bounding the steering peaks, and four shared
slacks. The travel-time chain is substituted directly into the cost, whose
gradient with respect to each inverse speed is the stage time coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import CorridorRow, RateRow, WaypointRow
from .errors import SolveFailedError
from .geometry import SpatialGrid
from .lp import LinearProgram, LpSolution
from .model import AffineStageModel, VehicleParams
from .trajectory import SpatialTrajectory

SLACK_NAMES = ("terminal_heading", "terminal_offset", "corridor", "waypoint_time")


@dataclass(frozen=True)
class CondensedStates:
    """Every state as an affine function of the stacked controls.

    ``z_j = const[j] + wrt_q[j] @ q + wrt_delta[j] @ delta``.
    """

    const: np.ndarray      # (N+1, 2)
    wrt_q: np.ndarray      # (N+1, 2, N)
    wrt_delta: np.ndarray  # (N+1, 2, N)


def condense(stages: list[AffineStageModel], z0) -> CondensedStates:
    n = len(stages)
    const = np.zeros((n + 1, 2))
    wrt_q = np.zeros((n + 1, 2, n))
    wrt_delta = np.zeros((n + 1, 2, n))
    const[0] = np.asarray(z0, dtype=float)
    for j, stage in enumerate(stages):
        const[j + 1] = stage.a @ const[j] + stage.g
        wrt_q[j + 1] = stage.a @ wrt_q[j]
        wrt_delta[j + 1] = stage.a @ wrt_delta[j]
        wrt_q[j + 1, :, j] += stage.b[:, 0]
        wrt_delta[j + 1, :, j] += stage.b[:, 1]
    return CondensedStates(const=const, wrt_q=wrt_q, wrt_delta=wrt_delta)


def _state_row(cond: CondensedStates, station: int, component: int,
               q_idx: np.ndarray, d_idx: np.ndarray, extra_idx=(), extra_coef=()):
    indices = np.concatenate([q_idx, d_idx, np.asarray(extra_idx, dtype=int)])
    coeffs = np.concatenate([
        cond.wrt_q[station, component],
        cond.wrt_delta[station, component],
        np.asarray(extra_coef, dtype=float),
    ])
    return indices, coeffs, float(cond.const[station, component])


def assemble(stages: list[AffineStageModel], z0, tau: float,
             params: VehicleParams, v_min: float, v_max: float,
             rate: list[RateRow], corridor: list[CorridorRow],
             waypoints: list[WaypointRow], slack_weight: float = 1e4,
             terminal_target=(0.0, 0.0), q_floor=None,
             objective_weights=(1.0, 1.0, 1.0)):
    """Build the planning LP. Returns ``(lp, condensed_states)``.

    ``q_floor`` optionally raises the per-station lower bounds of the inverse
    speed (friction speed caps). ``objective_weights`` scales the travel-time
    term and the two steering minmax terms; the defaults keep all three at
    unit weight with only the slack penalty carrying a large weight.
    """
    n = len(stages)
    if n < 2:
        raise ValueError("need at least 2 stages")
    if v_min <= 0.0:
        raise ValueError(
            "v_min must be strictly positive: the inverse-speed upper bound is 1/v_min"
        )
    w_time, w_peak, w_rate_peak = objective_weights
    time_coeffs = np.array([stage.time_coeff for stage in stages])

    lp = LinearProgram()
    q_lower = np.full(n, 1.0 / v_max)
    if q_floor is not None:
        q_lower = np.maximum(q_lower, np.asarray(q_floor, dtype=float))
    q_idx = lp.add_block("q", n, lower=q_lower, upper=1.0 / v_min,
                         cost=w_time * time_coeffs)
    d_idx = lp.add_block("delta", n, lower=params.steer_min, upper=params.steer_max)
    gamma = lp.add_block("gamma", 2, lower=0.0, upper=np.inf,
                         cost=[w_peak, w_rate_peak])
    sigma_upper = np.array([np.inf, np.inf, np.inf, np.inf if waypoints else 0.0])
    sigma = lp.add_block("sigma", 4, lower=0.0, upper=sigma_upper, cost=slack_weight)
    lp.cost_offset = w_time * tau

    cond = condense(stages, z0)

    # Steering minmax epigraphs: |delta_j| <= gamma_1, |delta_{j+1}-delta_j| <= gamma_2.
    for j in range(n):
        lp.add_row([d_idx[j], gamma[0]], [1.0, -1.0], upper=0.0, tag=("steer_peak", j))
        lp.add_row([d_idx[j], gamma[0]], [1.0, 1.0], lower=0.0, tag=("steer_peak", j))
    for j in range(n - 1):
        lp.add_row([d_idx[j + 1], d_idx[j], gamma[1]], [1.0, -1.0, -1.0],
                   upper=0.0, tag=("steer_rate_peak", j))
        lp.add_row([d_idx[j + 1], d_idx[j], gamma[1]], [1.0, -1.0, 1.0],
                   lower=0.0, tag=("steer_rate_peak", j))

    # Terminal state, softly pinned to the target by the first two slacks.
    for component, (name, s_idx) in enumerate(
            (("terminal_heading", sigma[0]), ("terminal_offset", sigma[1]))):
        target = float(terminal_target[component])
        idx, coef, const = _state_row(cond, n, component, q_idx, d_idx,
                                      [s_idx], [1.0])
        lp.add_row(idx, coef, lower=target - const, tag=(name, "lower"))
        idx, coef, const = _state_row(cond, n, component, q_idx, d_idx,
                                      [s_idx], [-1.0])
        lp.add_row(idx, coef, upper=target - const, tag=(name, "upper"))

    # Corridor rows share one slack.
    for row in corridor:
        idx, coef, const = _state_row(cond, row.station, 1, q_idx, d_idx,
                                      [sigma[2]], [1.0])
        lp.add_row(idx, coef, lower=row.lower - const, tag=("corridor", row.station))
        idx, coef, const = _state_row(cond, row.station, 1, q_idx, d_idx,
                                      [sigma[2]], [-1.0])
        lp.add_row(idx, coef, upper=row.upper - const, tag=("corridor", row.station))

    # Scheduled waypoints: the time chain t_j = tau + sum_{i<j} c_i q_i.
    for wp in waypoints:
        j = wp.index
        if j < 1:
            raise ValueError("waypoint at the initial station cannot be scheduled")
        idx = np.concatenate([q_idx[:j], [sigma[3]]])
        coef = np.concatenate([time_coeffs[:j], [1.0]])
        lp.add_row(idx, coef, lower=wp.time - tau, tag=("waypoint_time", j))
        coef = np.concatenate([time_coeffs[:j], [-1.0]])
        lp.add_row(idx, coef, upper=wp.time - tau, tag=("waypoint_time", j))
        for component, box in ((0, wp.e_psi_range), (1, wp.e_y_range)):
            if box is None:
                continue
            idx, coef, const = _state_row(cond, j, component, q_idx, d_idx)
            lp.add_row(idx, coef, lower=box[0] - const, upper=box[1] - const,
                       tag=("waypoint_state", j))

    # Hard control-rate rows.
    for row in rate:
        block = q_idx if row.channel == "speed" else d_idx
        if row.later == 0:
            lp.add_row([block[0]], [row.coef_later], lower=row.lower,
                       upper=row.upper, tag=(f"rate_{row.channel}", -1))
        else:
            lp.add_row([block[row.later], block[row.later - 1]],
                       [row.coef_later, row.coef_earlier],
                       lower=row.lower, upper=row.upper,
                       tag=(f"rate_{row.channel}", row.later - 1))

    return lp, cond


def extract_trajectory(sol: LpSolution, stages: list[AffineStageModel],
                       grid: SpatialGrid, z0, tau: float, lp: LinearProgram,
                       road_curvature=None) -> SpatialTrajectory:
    """Rebuild the trajectory from an optimal solution.

    States come from the step-by-step stage recursion (the condensed rows are
    verified against it in tests); times from the cumulative time chain.
    """
    if sol.status != "optimal":
        raise SolveFailedError(
            f"cannot extract a trajectory from a {sol.status} solution",
            status=sol.status,
            diagnostics={"infeasible_rows": sol.infeasible_rows},
        )
    n = len(stages)
    q = sol.x[lp.blocks["q"]]
    delta = sol.x[lp.blocks["delta"]]
    gamma = sol.x[lp.blocks["gamma"]]
    sigma = sol.x[lp.blocks["sigma"]]

    states = np.zeros((n + 1, 2))
    states[0] = np.asarray(z0, dtype=float)
    for j, stage in enumerate(stages):
        states[j + 1] = stage.a @ states[j] + stage.b @ np.array([q[j], delta[j]]) + stage.g

    time_coeffs = np.array([stage.time_coeff for stage in stages])
    t = tau + np.concatenate(([0.0], np.cumsum(time_coeffs * q)))

    eta = None
    if road_curvature is not None:
        kappa = np.asarray(road_curvature, dtype=float)[:n]
        stretch = (1.0 - kappa * states[:n, 1]) / np.cos(states[:n, 0])
        eta = float(np.sum(grid.steps * stretch))

    slacks = dict(zip(SLACK_NAMES, (float(v) for v in sigma)))
    objective = {
        "total": float(sol.objective),
        "travel_time": float(t[-1]),
        "steer_peak": float(gamma[0]),
        "steer_rate_peak": float(gamma[1]),
        "slack_penalty": float(sol.objective) - float(
            lp.cost[lp.blocks["q"]] @ q + lp.cost_offset
            + lp.cost[lp.blocks["gamma"]] @ gamma),
    }
    return SpatialTrajectory(
        stations=grid.stations.copy(),
        e_psi=states[:, 0],
        e_y=states[:, 1],
        q=q.copy(),
        delta=delta.copy(),
        t=t,
        slacks=slacks,
        objective=objective,
        eta=eta,
    )
