import numpy as np
import pytest

from spatialplan.errors import CorridorBlockedError, OutOfDomainError
from spatialplan.geometry import (
    Centerline,
    ObstacleBox,
    RoadCorridor,
    SpatialGrid,
    build_centerline,
    build_grid,
    frenet_to_global,
    global_to_frenet,
    map_obstacles,
)


def straight_east(length=100.0, step=1.0):
    return build_centerline([(0.0, 0.0), (length, 0.0)], step)


def circle_points(radius, arc, spacing=0.2, ccw=True):
    t = np.arange(0.0, arc / radius, spacing / radius)
    sign = 1.0 if ccw else -1.0
    return np.column_stack([radius * np.sin(t), sign * radius * (1.0 - np.cos(t))])


def wiggly_line():
    s_fine = np.linspace(0.0, 200.0, 2001)
    kappa = 0.015 * np.sin(2 * np.pi * s_fine / 200.0)
    psi = np.concatenate(([0.0], np.cumsum(0.5 * (kappa[1:] + kappa[:-1]) * np.diff(s_fine))))
    x = np.concatenate(([0.0], np.cumsum(np.cos(psi[:-1]) * np.diff(s_fine))))
    y = np.concatenate(([0.0], np.cumsum(np.sin(psi[:-1]) * np.diff(s_fine))))
    return build_centerline(np.column_stack([x, y]), 1.0)


def test_collinear_points_zero_curvature():
    line = build_centerline([(0, 0), (10, 0), (25, 0)], 2.5)
    assert np.allclose(line.curvature, 0.0)


def test_circle_curvature_ccw():
    line = build_centerline(circle_points(50.0, 120.0), 1.0)
    assert np.allclose(line.curvature, 0.02, atol=1e-3)


def test_circle_curvature_sign_cw():
    line = build_centerline(circle_points(50.0, 120.0, ccw=False), 1.0)
    assert np.allclose(line.curvature, -0.02, atol=1e-3)


def test_curvature_accuracy_scales_with_radius():
    for radius in (30.0, 80.0, 200.0):
        step = radius / 20.0
        line = build_centerline(circle_points(radius, 3.0 * radius, spacing=step / 4), step)
        interior = line.curvature[2:-2]
        assert np.all(np.abs(interior - 1.0 / radius) <= 0.05 / radius)


def test_two_points_straight_segment():
    line = build_centerline([(0, 0), (10, 10)], 100.0)
    assert len(line.xy) == 2
    assert np.allclose(line.heading, np.pi / 4)
    assert np.allclose(line.curvature, 0.0)


def test_too_few_distinct_points_rejected():
    with pytest.raises(ValueError):
        build_centerline([(1.0, 1.0), (1.0, 1.0 + 1e-12)], 1.0)


def test_vertex_projects_to_itself():
    line = wiggly_line()
    k = 37
    s, e_y, e_psi = global_to_frenet(line, line.xy[k], heading=float(line.heading[k]))
    assert abs(s - line.s[k]) < 1e-9
    assert abs(e_y) < 1e-9
    assert abs(e_psi) < 1e-12


def test_left_offset_on_straight_line():
    line = straight_east()
    s, e_y, e_psi = global_to_frenet(line, (10.0, 2.0), heading=0.0)
    assert (s, e_y, e_psi) == pytest.approx((10.0, 2.0, 0.0), abs=1e-12)


def test_frenet_to_global_basic():
    line = straight_east()
    point, psi = frenet_to_global(line, 5.0, -1.0, 0.0)
    assert point == pytest.approx([5.0, -1.0], abs=1e-12)
    assert psi == 0.0


def test_round_trip_identity():
    line = wiggly_line()
    rng = np.random.default_rng(7)
    for _ in range(100):
        s = rng.uniform(1.0, line.length - 1.0)
        e_y = rng.uniform(-3.0, 3.0)
        e_psi = rng.uniform(-0.5, 0.5)
        point, psi = frenet_to_global(line, s, e_y, e_psi)
        s2, e_y2, e_psi2 = global_to_frenet(line, point, heading=psi)
        assert abs(s2 - s) < 1e-6
        assert abs(e_y2 - e_y) < 1e-6
        assert abs(e_psi2 - e_psi) < 1e-8


def test_out_of_domain_rejected():
    line = straight_east(length=50.0)
    with pytest.raises(OutOfDomainError):
        global_to_frenet(line, (150.0, 0.0))
    with pytest.raises(OutOfDomainError):
        frenet_to_global(line, 60.0, 0.0)


def corridor(line=None, lo=-3.5, hi=3.5):
    line = line or straight_east(200.0, 1.0)
    return RoadCorridor.uniform(line, lo, hi, v_min=1.0, v_max=33.333)


def test_grid_uniform():
    grid = build_grid(corridor(), 0.0, 100.0, 5.0)
    assert len(grid.stations) == 21
    assert np.allclose(np.diff(grid.stations), 5.0)


def test_grid_contains_obstacle_corners():
    obs = ObstacleBox(s_min=12.8, s_max=17.4, ey_min=-1.0, ey_max=1.0, inflation=0.5)
    grid = build_grid(corridor(), 0.0, 100.0, 5.0, obstacles=[obs])
    assert grid.index_of(12.3) is not None
    assert grid.index_of(17.9) is not None
    assert np.all(np.diff(grid.stations) > 0)


def test_grid_merges_duplicate_corner():
    obs = ObstacleBox(s_min=15.0, s_max=21.7, ey_min=-1.0, ey_max=1.0)
    grid = build_grid(corridor(), 0.0, 100.0, 5.0, obstacles=[obs])
    assert np.count_nonzero(np.abs(grid.stations - 15.0) < 1e-9) == 1
    assert grid.index_of(21.7) is not None


def test_grid_rejects_horizon_past_end():
    with pytest.raises(ValueError):
        build_grid(corridor(straight_east(50.0)), 0.0, 100.0, 5.0)


def test_map_obstacles_auto_side_picks_wider_gap():
    cor = corridor()
    obs = ObstacleBox(s_min=20.0, s_max=30.0, ey_min=-0.5, ey_max=1.75)
    grid = build_grid(cor, 0.0, 100.0, 5.0, obstacles=[obs])
    lower, upper = map_obstacles(cor, grid, [obs], nominal_speed=10.0)
    covered = (grid.stations >= 20.0 - 1e-9) & (grid.stations <= 30.0 + 1e-9)
    # Free width below (3.0 m) beats above (1.75 m): pass on the right.
    assert np.allclose(upper[covered], -0.5)
    assert np.allclose(lower[covered], -3.5)
    assert np.allclose(upper[~covered], 3.5)


def test_map_obstacles_explicit_side():
    cor = corridor()
    obs = ObstacleBox(s_min=20.0, s_max=30.0, ey_min=-0.5, ey_max=1.75, pass_side="left")
    grid = build_grid(cor, 0.0, 100.0, 5.0, obstacles=[obs])
    lower, upper = map_obstacles(cor, grid, [obs], nominal_speed=10.0)
    covered = (grid.stations >= 20.0 - 1e-9) & (grid.stations <= 30.0 + 1e-9)
    assert np.allclose(lower[covered], 1.75)
    assert np.allclose(upper, 3.5)


def test_map_obstacles_without_obstacles_keeps_bounds():
    cor = corridor()
    grid = build_grid(cor, 0.0, 100.0, 5.0)
    lower, upper = map_obstacles(cor, grid, [], nominal_speed=10.0)
    assert np.allclose(lower, -3.5)
    assert np.allclose(upper, 3.5)


def test_moving_obstacle_at_ego_speed_never_met():
    cor = corridor()
    obs = ObstacleBox(s_min=30.0, s_max=40.0, ey_min=-2.0, ey_max=2.0, speed=10.0)
    grid = build_grid(cor, 0.0, 100.0, 5.0, obstacles=[obs])
    lower, upper = map_obstacles(cor, grid, [obs], nominal_speed=10.0)
    assert np.allclose(lower, -3.5)
    assert np.allclose(upper, 3.5)


def test_moving_obstacle_shifts_downstream():
    cor = corridor()
    obs = ObstacleBox(s_min=30.0, s_max=35.0, ey_min=0.0, ey_max=3.4, speed=5.0)
    grid = build_grid(cor, 0.0, 100.0, 5.0, obstacles=[obs])
    lower, upper = map_obstacles(cor, grid, [obs], nominal_speed=10.0)
    # At station s the obstacle has moved to [30 + s/2, 35 + s/2]; s = 60..70.
    hit = np.nonzero(upper < 3.5 - 1e-9)[0]
    assert len(hit) > 0
    assert grid.stations[hit[0]] >= 60.0 - 1e-6
    assert grid.stations[hit[-1]] <= 70.0 + 1e-6


def test_blocking_obstacle_raises():
    cor = corridor()
    obs = ObstacleBox(s_min=20.0, s_max=30.0, ey_min=-3.6, ey_max=3.6)
    grid = build_grid(cor, 0.0, 100.0, 5.0, obstacles=[obs])
    with pytest.raises(CorridorBlockedError):
        map_obstacles(cor, grid, [obs], nominal_speed=10.0)


def test_map_obstacles_never_widens():
    cor = corridor()
    rng = np.random.default_rng(3)
    for _ in range(20):
        s0 = rng.uniform(0.0, 80.0)
        obs = ObstacleBox(
            s_min=s0, s_max=s0 + rng.uniform(2.0, 15.0),
            ey_min=rng.uniform(-3.0, 0.0), ey_max=rng.uniform(0.1, 3.0),
            inflation=rng.uniform(0.0, 0.5),
        )
        grid = build_grid(cor, 0.0, 100.0, 5.0, obstacles=[obs])
        lower, upper = map_obstacles(cor, grid, [obs], nominal_speed=10.0)
        assert np.all(lower >= -3.5 - 1e-12)
        assert np.all(upper <= 3.5 + 1e-12)
        assert np.all(upper - lower > 0)


def test_obstacle_from_world_frame():
    line = straight_east()
    obs = ObstacleBox.from_world(
        line, [(20.0, -1.0), (25.0, -1.0), (25.0, 1.5), (20.0, 1.5)], inflation=0.25
    )
    assert obs.s_min == pytest.approx(20.0)
    assert obs.s_max == pytest.approx(25.0)
    assert obs.inflated == pytest.approx((19.75, 25.25, -1.25, 1.75))


def test_grid_requires_increasing_stations():
    with pytest.raises(ValueError):
        SpatialGrid(stations=np.array([0.0, 5.0, 5.0]))


def test_centerline_invariants_enforced():
    with pytest.raises(ValueError):
        Centerline(
            xy=np.array([[0.0, 0.0], [0.0, 0.0]]),
            s=np.array([0.0, 0.0]),
            heading=np.zeros(2),
            curvature=np.zeros(2),
        )
