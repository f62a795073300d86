"""Scenario definition, parametric roads, and strict YAML ingestion.

Scenario files are human-readable YAML. Scalar quantities accept a unit
suffix (``"120 km/h"``, ``"30 deg"``); bare numbers are SI. Unknown keys are
rejected with their full path so misspelled settings never pass silently.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .constraints import WaypointSpec
from .errors import ScenarioError
from .geometry import Centerline, ObstacleBox, RoadCorridor, build_centerline
from .model import VehicleParams

_QUANTITY_RE = re.compile(r"^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(.*?)\s*$")

_UNIT_TABLES = {
    "length": {"": 1.0, "m": 1.0, "km": 1000.0, "cm": 0.01},
    "time": {"": 1.0, "s": 1.0, "ms": 1e-3, "min": 60.0},
    "speed": {"": 1.0, "m/s": 1.0, "km/h": 1.0 / 3.6, "kph": 1.0 / 3.6},
    "accel": {"": 1.0, "m/s^2": 1.0, "m/s2": 1.0},
    "angle": {"": 1.0, "rad": 1.0, "deg": math.pi / 180.0},
    "angular_rate": {"": 1.0, "rad/s": 1.0, "deg/s": math.pi / 180.0},
    "curvature": {"": 1.0, "1/m": 1.0},
    "plain": {"": 1.0},
}


def parse_quantity(value, kind: str, where: str) -> float:
    """Parse a number or a ``"<number> <unit>"`` string into SI units."""
    if isinstance(value, bool) or value is None:
        raise ScenarioError(f"expected a number, got {value!r}", where)
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ScenarioError(f"expected a number or quantity string, got {value!r}", where)
    match = _QUANTITY_RE.match(value)
    if not match:
        raise ScenarioError(f"cannot parse quantity {value!r}", where)
    number, unit = match.groups()
    table = _UNIT_TABLES[kind]
    if unit not in table:
        known = ", ".join(sorted(u for u in table if u))
        raise ScenarioError(f"unknown {kind} unit {unit!r} (known: {known})", where)
    return float(number) * table[unit]


class _Section:
    """Dict wrapper that tracks consumed keys and rejects leftovers."""

    def __init__(self, data, where: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ScenarioError(f"expected a mapping, got {type(data).__name__}", where)
        self._data = dict(data)
        self.where = where

    def take(self, key: str, default=None, required: bool = False):
        if key in self._data:
            return self._data.pop(key)
        if required:
            raise ScenarioError(f"missing required key '{key}'", self.where)
        return default

    def quantity(self, key: str, kind: str, default=None, required: bool = False):
        raw = self.take(key, default=None, required=required)
        if raw is None:
            return default
        return parse_quantity(raw, kind, f"{self.where}.{key}")

    def section(self, key: str):
        return _Section(self.take(key, default={}), f"{self.where}.{key}")

    def finish(self):
        if self._data:
            keys = ", ".join(sorted(map(str, self._data)))
            raise ScenarioError(f"unknown keys: {keys}", self.where)


@dataclass(frozen=True)
class RoadSpec:
    """Parametric or explicit road geometry plus corridor width."""

    kind: str = "straight"              # straight | circle | s_curve | polyline
    length: float = 200.0
    radius: float = 50.0                # circle: signed, left turn positive
    first_radius: float = 50.0          # s_curve lobes
    second_radius: float = 50.0
    points: tuple = ()
    resample_step: float = 1.0
    bound_lower: float = -3.5
    bound_upper: float = 3.5
    lane_half_width: float | None = None  # departure threshold; defaults to corridor

    def lane_limit(self) -> float:
        if self.lane_half_width is not None:
            return self.lane_half_width
        return min(-self.bound_lower, self.bound_upper)


@dataclass(frozen=True)
class StartSpec:
    """Initial pose in the road frame and traveling speed."""

    station: float = 0.0
    offset: float = 0.0
    heading_error: float = 0.0
    speed: float = 13.889


@dataclass(frozen=True)
class PlannerSpec:
    """Settings of the two-pass spatial planner."""

    horizon: float | None = None        # None: to the road end
    base_step: float = 2.0
    rate_window: float = 0.1            # seconds the rate bounds are scaled by
    slack_weight: float = 1e4
    reaction_time: float = 0.05
    margin_variant: str = "reaction-time"  # | max-angle | none
    terminal_heading: float = 0.0
    terminal_offset: float = 0.0
    refine_passes: int = 0
    time_weight: float = 1.0
    steer_peak_weight: float = 1.0
    steer_rate_peak_weight: float = 1.0
    max_iterations: int = 50000


@dataclass(frozen=True)
class BaselineSpec:
    """Settings of the time-domain tracking baseline."""

    sample_time: float = 0.1
    reference_speed: float | None = None  # None: the corridor speed limit
    friction_adapted: bool = True
    horizon_steps: int | None = None      # None: until the lane ends
    max_iterations: int = 50000


@dataclass(frozen=True)
class Scenario:
    """Complete planning problem statement."""

    name: str = "scenario"
    road: RoadSpec = field(default_factory=RoadSpec)
    vehicle: VehicleParams = None
    start: StartSpec = field(default_factory=StartSpec)
    v_min: float = 1.0
    v_max: float = 33.333
    obstacles: tuple = ()
    waypoints: tuple = ()
    planner: PlannerSpec = field(default_factory=PlannerSpec)
    baseline: BaselineSpec = field(default_factory=BaselineSpec)

    def __post_init__(self):
        if self.vehicle is None:
            object.__setattr__(self, "vehicle", default_vehicle())
        if not (0.0 < self.v_min < self.v_max):
            raise ScenarioError("speed limits require 0 < v_min < v_max", self.name)
        if not (self.v_min <= self.start.speed <= self.v_max + 1e-9):
            raise ScenarioError("start speed must lie within the speed limits", self.name)

    def build_road(self) -> tuple[Centerline, RoadCorridor]:
        line = build_road_centerline(self.road)
        corridor = RoadCorridor.uniform(
            line, self.road.bound_lower, self.road.bound_upper,
            v_min=self.v_min, v_max=self.v_max)
        return line, corridor

    def horizon_length(self, line: Centerline) -> float:
        if self.planner.horizon is not None:
            return self.planner.horizon
        return line.length - self.start.station


def default_vehicle() -> VehicleParams:
    return VehicleParams(
        wheelbase=2.8, front_length=3.5, rear_length=0.9, half_width=0.9,
        steer_min=-0.5, steer_max=0.5, accel_min=-4.0, accel_max=3.0,
        steer_rate_min=-0.5, steer_rate_max=0.5, friction=0.8,
    )


def _integrate_curvature(s_fine: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    """Plane points of a path with curvature ``kappa`` sampled on ``s_fine``."""
    ds = np.diff(s_fine)
    psi = np.concatenate(([0.0], np.cumsum(0.5 * (kappa[1:] + kappa[:-1]) * ds)))
    x = np.concatenate(([0.0], np.cumsum(np.cos(psi[:-1]) * ds)))
    y = np.concatenate(([0.0], np.cumsum(np.sin(psi[:-1]) * ds)))
    return np.column_stack([x, y])


def build_road_centerline(road: RoadSpec) -> Centerline:
    fine = min(0.25, road.resample_step / 2.0)
    if road.kind == "straight":
        points = [(0.0, 0.0), (road.length, 0.0)]
    elif road.kind == "circle":
        s_fine = np.arange(0.0, road.length + fine, fine)
        kappa = np.full_like(s_fine, 1.0 / road.radius)
        points = _integrate_curvature(s_fine, kappa)
    elif road.kind == "s_curve":
        s_fine = np.arange(0.0, road.length + fine, fine)
        amp = np.where(s_fine <= road.length / 2.0,
                       1.0 / road.first_radius, 1.0 / road.second_radius)
        kappa = amp * np.sin(2.0 * np.pi * s_fine / road.length)
        points = _integrate_curvature(s_fine, kappa)
    elif road.kind == "polyline":
        points = road.points
    else:
        raise ScenarioError(f"unknown road kind {road.kind!r}", "road.kind")
    return build_centerline(points, road.resample_step)


def load_scenario(path) -> Scenario:
    """Load and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        location = f"{path}:{mark.line + 1}" if mark else str(path)
        raise ScenarioError(f"malformed YAML: {getattr(exc, 'problem', exc)}", location)
    return parse_scenario(raw, source=str(path))


def parse_scenario(raw: dict, source: str = "scenario") -> Scenario:
    top = _Section(raw, source)
    name = top.take("name", default="scenario")

    road_sec = top.section("road")
    kind = road_sec.take("kind", default="straight")
    if kind not in ("straight", "circle", "s_curve", "polyline"):
        raise ScenarioError(f"unknown road kind {kind!r}", f"{road_sec.where}.kind")
    half_width = road_sec.quantity("half_width", "length")
    bounds_sec = road_sec.take("bounds")
    if half_width is not None and bounds_sec is not None:
        raise ScenarioError("give either half_width or bounds, not both", road_sec.where)
    if bounds_sec is not None:
        bsec = _Section(bounds_sec, f"{road_sec.where}.bounds")
        bound_lower = bsec.quantity("lower", "length", required=True)
        bound_upper = bsec.quantity("upper", "length", required=True)
        bsec.finish()
    else:
        hw = 3.5 if half_width is None else half_width
        bound_lower, bound_upper = -hw, hw
    points = road_sec.take("points", default=[])
    if kind == "polyline" and len(points) < 2:
        raise ScenarioError("polyline roads need at least 2 points",
                            f"{road_sec.where}.points")
    road = RoadSpec(
        kind=kind,
        length=road_sec.quantity("length", "length", default=200.0),
        radius=road_sec.quantity("radius", "length", default=50.0),
        first_radius=road_sec.quantity("first_radius", "length", default=50.0),
        second_radius=road_sec.quantity("second_radius", "length", default=50.0),
        points=tuple(tuple(p) for p in points),
        resample_step=road_sec.quantity("resample_step", "length", default=1.0),
        bound_lower=bound_lower,
        bound_upper=bound_upper,
        lane_half_width=road_sec.quantity("lane_half_width", "length"),
    )
    road_sec.finish()

    v_min = top.quantity("v_min", "speed", default=1.0)
    v_max = top.quantity("v_max", "speed", default=33.333)

    veh_sec = top.section("vehicle")
    base = default_vehicle()
    steer_max = veh_sec.quantity("steer_max", "angle", default=base.steer_max)
    steer_rate_max = veh_sec.quantity("steer_rate_max", "angular_rate",
                                      default=base.steer_rate_max)
    vehicle = VehicleParams(
        wheelbase=veh_sec.quantity("wheelbase", "length", default=base.wheelbase),
        front_length=veh_sec.quantity("front_length", "length", default=base.front_length),
        rear_length=veh_sec.quantity("rear_length", "length", default=base.rear_length),
        half_width=veh_sec.quantity("half_width", "length", default=base.half_width),
        steer_min=veh_sec.quantity("steer_min", "angle", default=-steer_max),
        steer_max=steer_max,
        accel_min=veh_sec.quantity("accel_min", "accel", default=base.accel_min),
        accel_max=veh_sec.quantity("accel_max", "accel", default=base.accel_max),
        steer_rate_min=veh_sec.quantity("steer_rate_min", "angular_rate",
                                        default=-steer_rate_max),
        steer_rate_max=steer_rate_max,
        friction=veh_sec.quantity("friction", "plain", default=base.friction),
    )
    veh_sec.finish()

    start_sec = top.section("start")
    start = StartSpec(
        station=start_sec.quantity("station", "length", default=0.0),
        offset=start_sec.quantity("offset", "length", default=0.0),
        heading_error=start_sec.quantity("heading_error", "angle", default=0.0),
        speed=start_sec.quantity("speed", "speed", default=13.889),
    )
    start_sec.finish()

    obstacles = []
    for i, entry in enumerate(top.take("obstacles", default=[]) or []):
        sec = _Section(entry, f"{source}.obstacles[{i}]")
        pass_side = sec.take("pass_side", default="auto")
        try:
            obstacles.append(ObstacleBox(
                s_min=sec.quantity("s_min", "length", required=True),
                s_max=sec.quantity("s_max", "length", required=True),
                ey_min=sec.quantity("ey_min", "length", required=True),
                ey_max=sec.quantity("ey_max", "length", required=True),
                inflation=sec.quantity("inflation", "length", default=0.0),
                speed=sec.quantity("speed", "speed", default=0.0),
                pass_side=pass_side,
            ))
        except ValueError as exc:
            raise ScenarioError(str(exc), sec.where)
        sec.finish()

    waypoints = []
    for i, entry in enumerate(top.take("waypoints", default=[]) or []):
        sec = _Section(entry, f"{source}.waypoints[{i}]")
        box = sec.take("box")
        e_psi_range = e_y_range = None
        if box is not None:
            bsec = _Section(box, f"{sec.where}.box")
            rng_psi = bsec.take("heading_error")
            rng_ey = bsec.take("offset")
            bsec.finish()
            w = f"{sec.where}.box"
            if rng_psi is not None:
                e_psi_range = tuple(parse_quantity(v, "angle", w) for v in rng_psi)
            if rng_ey is not None:
                e_y_range = tuple(parse_quantity(v, "length", w) for v in rng_ey)
        waypoints.append(WaypointSpec(
            station=sec.quantity("station", "length", required=True),
            time=sec.quantity("time", "time", required=True),
            e_psi_range=e_psi_range,
            e_y_range=e_y_range,
        ))
        sec.finish()

    plan_sec = top.section("planner")
    variant = plan_sec.take("margin_variant", default="reaction-time")
    if variant not in ("reaction-time", "max-angle", "none"):
        raise ScenarioError(f"unknown margin variant {variant!r}",
                            f"{plan_sec.where}.margin_variant")
    planner = PlannerSpec(
        horizon=plan_sec.quantity("horizon", "length"),
        base_step=plan_sec.quantity("base_step", "length", default=2.0),
        rate_window=plan_sec.quantity("rate_window", "time", default=0.1),
        slack_weight=plan_sec.quantity("slack_weight", "plain", default=1e4),
        reaction_time=plan_sec.quantity("reaction_time", "time", default=0.05),
        margin_variant=variant,
        terminal_heading=plan_sec.quantity("terminal_heading", "angle", default=0.0),
        terminal_offset=plan_sec.quantity("terminal_offset", "length", default=0.0),
        refine_passes=int(plan_sec.take("refine_passes", default=0)),
        time_weight=plan_sec.quantity("time_weight", "plain", default=1.0),
        steer_peak_weight=plan_sec.quantity("steer_peak_weight", "plain", default=1.0),
        steer_rate_peak_weight=plan_sec.quantity("steer_rate_peak_weight", "plain",
                                                 default=1.0),
        max_iterations=int(plan_sec.take("max_iterations", default=50000)),
    )
    plan_sec.finish()

    base_sec = top.section("baseline")
    friction_adapted = base_sec.take("friction_adapted", default=True)
    if not isinstance(friction_adapted, bool):
        raise ScenarioError("friction_adapted must be true or false",
                            f"{base_sec.where}.friction_adapted")
    horizon_steps = base_sec.take("horizon_steps")
    baseline = BaselineSpec(
        sample_time=base_sec.quantity("sample_time", "time", default=0.1),
        reference_speed=base_sec.quantity("reference_speed", "speed"),
        friction_adapted=friction_adapted,
        horizon_steps=None if horizon_steps is None else int(horizon_steps),
        max_iterations=int(base_sec.take("max_iterations", default=50000)),
    )
    base_sec.finish()

    top.finish()
    return Scenario(
        name=name, road=road, vehicle=vehicle, start=start,
        v_min=v_min, v_max=v_max,
        obstacles=tuple(obstacles), waypoints=tuple(waypoints),
        planner=planner, baseline=baseline,
    )


def with_waypoint(scenario: Scenario, station: float, time: float) -> Scenario:
    """Copy of the scenario with one more scheduled waypoint."""
    return replace(scenario,
                   waypoints=scenario.waypoints + (WaypointSpec(station=station, time=time),))
