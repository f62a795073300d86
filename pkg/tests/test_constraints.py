import math

import numpy as np
import pytest

from spatialplan.constraints import (
    WaypointSpec,
    corridor_rows,
    friction_profile,
    margin_at_heading,
    max_margin_heading,
    rate_rows,
    speed_limit_profile,
    vehicle_margin,
    waypoint_rows,
)
from spatialplan.geometry import SpatialGrid
from spatialplan.model import ControlSample, VehicleParams


def params(**overrides) -> VehicleParams:
    base = dict(
        wheelbase=2.8, front_length=3.5, rear_length=0.9, half_width=0.9,
        steer_min=-0.5, steer_max=0.5, accel_min=-4.0, accel_max=5.0,
        steer_rate_min=-0.5, steer_rate_max=0.5, friction=0.8,
    )
    base.update(overrides)
    return VehicleParams(**base)


def grid_of(n, step=2.0):
    return SpatialGrid(stations=np.arange(n + 1) * step)


def test_rate_rows_reference_point_feasible():
    p = params()
    grid = grid_of(5)
    q_ref = np.full(5, 0.05)
    rows = rate_rows(grid, q_ref, p, 0.1, ControlSample(q=0.05, delta=0.0))
    for row in rows:
        value = row.coef_later * 0.05
        if row.later > 0:
            value += row.coef_earlier * (0.05 if row.channel == "speed" else 0.0)
        if row.channel == "steer":
            value = row.coef_later * 0.0 + row.coef_earlier * 0.0
        assert row.lower <= value <= row.upper


def test_rate_rows_velocity_linearization_example():
    p = params()
    grid = grid_of(3)
    rows = rate_rows(grid, np.full(3, 0.05), p, 0.1, ControlSample(q=0.05, delta=0.0))
    speed = [r for r in rows if r.channel == "speed" and r.later > 0]
    for row in speed:
        assert row.coef_later == pytest.approx(-400.0)
        assert row.coef_earlier == pytest.approx(400.0)
        assert row.upper == pytest.approx(0.5)   # 0.1 * 5 m/s^2
        assert row.lower == pytest.approx(-0.4)  # 0.1 * -4 m/s^2


def test_rate_rows_steering_bounds():
    p = params()
    grid = grid_of(3)
    rows = rate_rows(grid, np.full(3, 0.05), p, 0.1, ControlSample(q=0.05, delta=0.0))
    steer = [r for r in rows if r.channel == "steer" and r.later > 0]
    assert all(r.upper == pytest.approx(0.05) for r in steer)
    assert all(r.lower == pytest.approx(-0.05) for r in steer)


def test_rate_rows_exact_at_reference():
    p = params()
    rng = np.random.default_rng(2)
    grid = grid_of(6)
    q_ref = 1.0 / rng.uniform(5.0, 30.0, size=6)
    rows = rate_rows(grid, q_ref, p, 0.1, ControlSample(q=q_ref[0], delta=0.0))
    for row in rows:
        if row.channel != "speed" or row.later == 0:
            continue
        j = row.later
        linear = row.coef_later * q_ref[j] + row.coef_earlier * q_ref[j - 1]
        true = 1.0 / q_ref[j] - 1.0 / q_ref[j - 1]
        shift = 0.1 * p.accel_max - row.upper
        assert linear == pytest.approx(true - shift, abs=1e-12)


def test_rate_rows_initial_row_anchors_previous_control():
    p = params()
    grid = grid_of(4)
    q_ref = np.full(4, 0.08)
    prev = ControlSample(q=0.1, delta=0.02)
    rows = rate_rows(grid, q_ref, p, 0.1, prev)
    first_steer = rows[0]
    assert first_steer.channel == "steer" and first_steer.later == 0
    assert first_steer.upper == pytest.approx(0.05 + 0.02)
    first_speed = rows[1]
    assert first_speed.channel == "speed" and first_speed.later == 0
    # Exact at q_0 == q_ref[0]: linearized speed change equals 1/q_ref - v_prev.
    linear = first_speed.coef_later * q_ref[0]
    true = 1.0 / q_ref[0] - prev.v
    shift = 0.1 * p.accel_max - first_speed.upper
    assert linear == pytest.approx(true - shift, abs=1e-12)


def test_rate_rows_reject_bad_inputs():
    p = params()
    with pytest.raises(ValueError):
        rate_rows(grid_of(3), np.array([0.05, -0.01, 0.05]), p, 0.1,
                  ControlSample(q=0.05, delta=0.0))
    with pytest.raises(ValueError):
        rate_rows(grid_of(3), np.full(3, 0.05), p, 0.0, ControlSample(q=0.05, delta=0.0))


def test_max_margin_heading_value():
    angle = max_margin_heading(params())
    assert math.degrees(angle) == pytest.approx(75.6, abs=0.1)


def test_margin_at_zero_heading_is_half_width():
    p = params()
    result = vehicle_margin(p, speed=0.0, speed_limit=33.333, offset_abs=0.0,
                            reach=3.5, reaction_time=0.05)
    assert result.margin == pytest.approx(p.half_width)


def test_margin_reaction_time_worked_example():
    p = params()
    result = vehicle_margin(p, speed=33.333, speed_limit=33.333, offset_abs=0.0,
                            reach=3.0, reaction_time=0.05, variant="reaction-time")
    assert result.design_heading == pytest.approx(0.4365, abs=1e-3)


def test_margin_max_angle_value():
    p = params()
    result = vehicle_margin(p, speed=33.333, speed_limit=33.333, offset_abs=0.0,
                            reach=3.5, reaction_time=0.05, variant="max-angle")
    assert result.margin == pytest.approx(math.hypot(3.5, 0.9), abs=1e-9)
    assert result.margin == pytest.approx(3.614, abs=1e-3)


def test_margin_monotone_in_speed_and_variant_order():
    p = params()
    for variant in ("max-angle", "reaction-time"):
        margins = [
            vehicle_margin(p, speed=v, speed_limit=33.333, offset_abs=0.0,
                           reach=3.5, reaction_time=0.05, variant=variant).margin
            for v in (0.0, 10.0, 20.0, 30.0, 33.3)
        ]
        assert all(b >= a - 1e-12 for a, b in zip(margins, margins[1:]))
    for v in (0.0, 10.0, 20.0, 30.0, 33.3):
        reaction = vehicle_margin(p, v, 33.333, 0.0, 3.5, 0.05, "reaction-time")
        conservative = vehicle_margin(p, v, 33.333, 0.0, 3.5, 0.05, "max-angle")
        assert reaction.margin <= conservative.margin + 1e-12


def test_margin_strictly_increasing_in_heading():
    p = params()
    angles = np.linspace(0.0, max_margin_heading(p), 50)
    values = np.array([margin_at_heading(p, a) for a in angles])
    assert np.all(np.diff(values) > 0.0)
    assert values[0] == pytest.approx(p.half_width)
    assert np.all(values <= values[-1] + 1e-12)


def test_margin_narrow_corridor_falls_back_conservative():
    p = params()
    result = vehicle_margin(p, speed=10.0, speed_limit=33.333, offset_abs=0.0,
                            reach=0.8, reaction_time=0.05, variant="reaction-time")
    assert result.corridor_too_narrow
    assert result.margin == pytest.approx(margin_at_heading(p, max_margin_heading(p)))


def test_margin_unreachable_boundary_clamps_to_max():
    p = params()
    result = vehicle_margin(p, speed=1.0, speed_limit=33.333, offset_abs=0.0,
                            reach=50.0, reaction_time=0.05, variant="reaction-time")
    assert result.design_heading == pytest.approx(max_margin_heading(p))


def test_corridor_rows_apply_margin():
    grid = grid_of(3)
    lower = np.full(4, -3.5)
    upper = np.full(4, 3.5)
    rows = corridor_rows(grid, lower, upper, 0.9)
    assert len(rows) == 3
    assert all(r.lower == pytest.approx(-2.6) and r.upper == pytest.approx(2.6)
               for r in rows)
    assert not any(r.crossed for r in rows)


def test_corridor_rows_zero_margin_keeps_raw_bounds():
    grid = grid_of(2)
    rows = corridor_rows(grid, np.full(3, -1.0), np.full(3, 2.0), 0.0)
    assert all(r.lower == -1.0 and r.upper == 2.0 for r in rows)


def test_corridor_rows_flag_crossed_bounds():
    grid = grid_of(2)
    rows = corridor_rows(grid, np.full(3, 0.0), np.full(3, 1.5), 0.9)
    assert all(r.crossed for r in rows)
    assert rows[0].upper - rows[0].lower == pytest.approx(-0.3)


def test_friction_profile_straight_path():
    p = params()
    traj = type("T", (), {})()
    traj.stations = np.arange(6) * 2.0
    traj.delta = np.zeros(5)
    profile = friction_profile(traj, p, v_cap=33.333)
    assert np.allclose(profile.v_max, 33.333)


def test_friction_lateral_limit_value():
    p = params()
    limit, lateral = speed_limit_profile(np.full(5, 0.02), np.full(4, 2.0), p, v_cap=50.0)
    assert lateral[2] == pytest.approx(math.sqrt(0.8 * 9.81 / 0.02), abs=1e-9)
    assert lateral[2] == pytest.approx(19.81, abs=0.01)


def brute_force_profile(lateral, steps, accel_min, accel_max, v_cap):
    v = np.minimum(np.asarray(lateral, dtype=float), v_cap)
    changed = True
    while changed:
        changed = False
        for j in range(len(v) - 1):
            cap = math.sqrt(v[j] ** 2 + 2.0 * accel_max * steps[j])
            if v[j + 1] > cap + 1e-12:
                v[j + 1] = cap
                changed = True
        for j in range(len(v) - 2, -1, -1):
            cap = math.sqrt(v[j + 1] ** 2 + 2.0 * abs(accel_min) * steps[j])
            if v[j] > cap + 1e-12:
                v[j] = cap
                changed = True
    return v


def test_friction_two_pass_matches_fixpoint():
    p = params()
    kappa = np.array([1e-9, 1e-9, 0.05, 1e-9, 1e-9])
    steps = np.full(4, 3.0)
    limit, lateral = speed_limit_profile(kappa, steps, p, v_cap=30.0)
    expected = brute_force_profile(lateral, steps, p.accel_min, p.accel_max, 30.0)
    assert np.allclose(limit, expected, atol=1e-12)
    # A single tight station pulls its neighbors down through both passes.
    assert limit[1] < 30.0 and limit[3] < 30.0


def test_friction_profile_satisfies_recursions():
    p = params()
    rng = np.random.default_rng(9)
    kappa = np.abs(rng.normal(scale=0.02, size=20))
    steps = rng.uniform(1.0, 4.0, size=19)
    limit, lateral = speed_limit_profile(kappa, steps, p, v_cap=33.333)
    assert np.all(limit <= lateral + 1e-12)
    assert np.all(limit <= 33.333 + 1e-12)
    for j in range(19):
        assert limit[j] ** 2 <= limit[j + 1] ** 2 + 2 * abs(p.accel_min) * steps[j] + 1e-9
        assert limit[j + 1] ** 2 <= limit[j] ** 2 + 2 * p.accel_max * steps[j] + 1e-9


def test_waypoint_rows_resolve_stations():
    grid = SpatialGrid(stations=np.array([0.0, 50.0, 77.7, 100.0, 170.0, 200.0]))
    rows = waypoint_rows(grid, [WaypointSpec(station=77.7, time=10.0),
                                WaypointSpec(station=170.0, time=16.0)])
    assert [r.index for r in rows] == [2, 4]
    assert [r.time for r in rows] == [10.0, 16.0]


def test_waypoint_rows_require_grid_membership():
    grid = grid_of(4)
    with pytest.raises(ValueError, match="extra stations"):
        waypoint_rows(grid, [WaypointSpec(station=3.7, time=5.0)])


def test_waypoint_rows_require_future_times():
    grid = grid_of(4)
    with pytest.raises(ValueError, match="after plan time"):
        waypoint_rows(grid, [WaypointSpec(station=4.0, time=1.0)], plan_time=2.0)


def test_waypoint_rows_none_is_empty():
    assert waypoint_rows(grid_of(3), []) == []
