"""Road geometry: piecewise-affine centerlines, the road-aligned frame, and grids.

The road is represented by a resampled polyline with per-vertex arc length,
tangent heading, and signed curvature (left turn positive). Straight segments
carry zero curvature, so no formula ever touches an infinite turn radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CorridorBlockedError, OutOfDomainError

DUPLICATE_STATION_TOL = 1e-6


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Centerline:
    """Arc-length parameterized polyline with tangent heading and curvature.

    Positions are piecewise linear in ``s`` along the polyline; the tangent
    heading is stored per vertex (continuous, unwrapped) and interpolated
    linearly in ``s``, so the frame direction varies smoothly. Both frame
    conversions use this shared heading field, which makes them exact
    inverses of each other.
    """

    xy: np.ndarray         # (M, 2) vertex positions, meters
    s: np.ndarray          # (M,) cumulative arc length, s[0] == 0
    heading: np.ndarray    # (M,) unwrapped tangent heading, radians
    curvature: np.ndarray  # (M,) signed curvature, 1/m, left turn positive

    def __post_init__(self):
        if len(self.xy) < 2:
            raise ValueError("centerline needs at least 2 vertices")
        ds = np.diff(self.s)
        if np.any(ds <= 1e-9):
            raise ValueError("arc lengths must be strictly increasing")
        if abs(self.s[0]) > 1e-12:
            raise ValueError("arc length must start at 0")
        if not np.all(np.isfinite(self.curvature)):
            raise ValueError("curvature must be finite everywhere")

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def segment_index(self, s: float) -> int:
        """Index of the segment containing ``s`` (right-continuous at vertices)."""
        idx = int(np.searchsorted(self.s, s, side="right")) - 1
        return min(max(idx, 0), len(self.s) - 2)

    def heading_at(self, s) -> np.ndarray | float:
        """Unwrapped tangent heading at ``s``, linearly interpolated."""
        out = np.interp(s, self.s, self.heading)
        return float(out) if np.isscalar(s) else out

    def curvature_at(self, s) -> np.ndarray | float:
        """Signed curvature at ``s``, linearly interpolated between vertices."""
        out = np.interp(s, self.s, self.curvature)
        return float(out) if np.isscalar(s) else out

    def point_at(self, s: float) -> np.ndarray:
        """Polyline position at arc length ``s``."""
        k = self.segment_index(s)
        seg = self.xy[k + 1] - self.xy[k]
        return self.xy[k] + (s - self.s[k]) / (self.s[k + 1] - self.s[k]) * seg


def build_centerline(points, resample_step: float) -> Centerline:
    """Resample a polyline at uniform arc-length spacing and estimate curvature.

    Curvature at interior vertices comes from the circumscribed circle of three
    consecutive vertices, signed by the turn direction of the two tangents;
    endpoint vertices copy their nearest interior neighbor.
    """
    if resample_step <= 0.0:
        raise ValueError("resample_step must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) >= 2:
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9
        pts = pts[keep]
    if len(pts) < 2:
        raise ValueError("need at least 2 distinct points to build a centerline")

    seg_len = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s_in = np.concatenate(([0.0], np.cumsum(seg_len)))
    total = float(s_in[-1])
    n_seg = max(1, int(math.ceil(total / resample_step - 1e-12)))
    s_sample = np.linspace(0.0, total, n_seg + 1)
    xy = np.column_stack(
        [np.interp(s_sample, s_in, pts[:, 0]), np.interp(s_sample, s_in, pts[:, 1])]
    )

    diffs = np.diff(xy, axis=0)
    lens = np.linalg.norm(diffs, axis=1)
    s = np.concatenate(([0.0], np.cumsum(lens)))
    seg_heading = np.unwrap(np.arctan2(diffs[:, 1], diffs[:, 0]))
    # Vertex heading anchors: bisector of the adjacent segments, single
    # segment heading at the ends.
    heading = np.empty(len(xy))
    heading[0] = seg_heading[0]
    heading[-1] = seg_heading[-1]
    heading[1:-1] = 0.5 * (seg_heading[:-1] + seg_heading[1:])

    m = len(xy)
    curvature = np.zeros(m)
    if m >= 3:
        a, b, c = xy[:-2], xy[1:-1], xy[2:]
        ab, bc, ca = b - a, c - b, a - c
        cross = ab[:, 0] * (c - a)[:, 1] - ab[:, 1] * (c - a)[:, 0]
        denom = (
            np.linalg.norm(ab, axis=1)
            * np.linalg.norm(bc, axis=1)
            * np.linalg.norm(ca, axis=1)
        )
        interior = np.where(denom > 1e-12, 2.0 * cross / np.maximum(denom, 1e-12), 0.0)
        curvature[1:-1] = interior
        curvature[0] = interior[0]
        curvature[-1] = interior[-1]

    return Centerline(xy=xy, s=s, heading=heading, curvature=curvature)


def _tangential_residual(line: Centerline, p: np.ndarray, s: float) -> float:
    """Component of ``p - c(s)`` along the interpolated tangent at ``s``."""
    psi = line.heading_at(s)
    rel = p - line.point_at(s)
    return float(rel[0] * math.cos(psi) + rel[1] * math.sin(psi))


def global_to_frenet(line: Centerline, point, heading: float = 0.0):
    """Project a planar point into the road-aligned frame.

    Finds the station where ``p - c(s)`` is orthogonal to the interpolated
    tangent (Newton refinement seeded by the nearest polyline segment; ties
    resolve toward the smallest ``s``). Returns ``(s, e_y, e_psi)`` with
    ``e_y`` positive left of the tangent and ``e_psi`` wrapped to (-pi, pi].
    Stations clamp to the road ends; overshooting an end by more than the
    centerline length is rejected as out of domain.
    """
    p = np.asarray(point, dtype=float)
    a = line.xy[:-1]
    d = np.diff(line.xy, axis=0)
    seg_len2 = np.einsum("ij,ij->i", d, d)
    t = np.clip(np.einsum("ij,ij->i", p - a, d) / seg_len2, 0.0, 1.0)
    proj = a + t[:, None] * d
    dist2 = np.einsum("ij,ij->i", p - proj, p - proj)
    k = int(np.argmin(dist2))
    s = float(line.s[k] + t[k] * math.sqrt(seg_len2[k]))

    residual = _tangential_residual(line, p, s)
    for _ in range(60):
        if abs(residual) <= 1e-11:
            break
        psi = line.heading_at(s)
        rel = p - line.point_at(s)
        e_n = -rel[0] * math.sin(psi) + rel[1] * math.cos(psi)
        kk = line.segment_index(s)
        psi_slope = (line.heading[kk + 1] - line.heading[kk]) / (line.s[kk + 1] - line.s[kk])
        slope = -1.0 + e_n * psi_slope
        # Inside the corridor the residual strictly decreases in s; fall back
        # to a unit slope if the local estimate degenerates.
        if abs(slope) < 1e-6:
            slope = -1.0
        s_new = min(max(s - residual / slope, 0.0), line.length)
        if s_new == s:
            break
        s = s_new
        residual = _tangential_residual(line, p, s)

    if (s == 0.0 or s == line.length) and abs(residual) > line.length:
        raise OutOfDomainError(
            f"point {p.tolist()} lies {abs(residual):.1f} m beyond the road end"
        )

    psi_road = line.heading_at(s)
    rel = p - line.point_at(s)
    e_y = float(-rel[0] * math.sin(psi_road) + rel[1] * math.cos(psi_road))
    e_psi = wrap_angle(heading - psi_road)
    return s, e_y, e_psi


def frenet_to_global(line: Centerline, s: float, e_y: float, e_psi: float = 0.0):
    """Map road-aligned coordinates back to the plane.

    Returns ``((x, y), psi)``. ``s`` must lie within the centerline.
    """
    if s < -1e-9 or s > line.length + 1e-9:
        raise OutOfDomainError(f"s={s:.3f} outside [0, {line.length:.3f}]")
    s = min(max(s, 0.0), line.length)
    psi_road = line.heading_at(s)
    normal = np.array([-math.sin(psi_road), math.cos(psi_road)])
    point = line.point_at(s) + e_y * normal
    psi = wrap_angle(psi_road + e_psi)
    return point, psi


@dataclass(frozen=True)
class RoadCorridor:
    """Centerline plus lateral bounds and speed limits.

    Lateral bounds are piecewise constant in ``s``: ``bound_s[i]`` marks where
    the pair ``(lower[i], upper[i])`` starts to apply.
    """

    centerline: Centerline
    bound_s: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    v_min: float
    v_max: float

    def __post_init__(self):
        if np.any(self.lower >= self.upper):
            raise ValueError("corridor requires lower < upper everywhere")
        if not (0.0 <= self.v_min < self.v_max):
            raise ValueError("speed limits require 0 <= v_min < v_max")
        if np.any(np.diff(self.bound_s) <= 0):
            raise ValueError("bound breakpoints must be strictly increasing")

    @classmethod
    def uniform(cls, centerline: Centerline, lower: float, upper: float,
                v_min: float, v_max: float) -> "RoadCorridor":
        return cls(
            centerline=centerline,
            bound_s=np.array([0.0]),
            lower=np.array([float(lower)]),
            upper=np.array([float(upper)]),
            v_min=float(v_min),
            v_max=float(v_max),
        )

    def bounds_at(self, s):
        """Lateral bounds (lower, upper) at station(s) ``s``."""
        idx = np.clip(np.searchsorted(self.bound_s, s, side="right") - 1, 0, len(self.bound_s) - 1)
        return self.lower[idx], self.upper[idx]


@dataclass(frozen=True)
class ObstacleBox:
    """Axis-aligned box in the road frame, optionally drifting along the road.

    ``pass_side`` states on which side the planner must leave the box:
    ``"left"`` (higher e_y), ``"right"`` (lower e_y), or ``"auto"`` to pick
    the side with more remaining free width.
    """

    s_min: float
    s_max: float
    ey_min: float
    ey_max: float
    inflation: float = 0.0
    speed: float = 0.0     # drift velocity along s, m/s (0 = static)
    pass_side: str = "auto"

    def __post_init__(self):
        if self.s_max <= self.s_min or self.ey_max <= self.ey_min:
            raise ValueError("obstacle box must have positive area")
        if self.inflation < 0.0:
            raise ValueError("inflation must be nonnegative")
        if self.pass_side not in ("left", "right", "auto"):
            raise ValueError(f"unknown pass_side {self.pass_side!r}")

    @property
    def inflated(self) -> tuple[float, float, float, float]:
        m = self.inflation
        return self.s_min - m, self.s_max + m, self.ey_min - m, self.ey_max + m

    @classmethod
    def from_world(cls, line: Centerline, corners, inflation: float = 0.0,
                   speed: float = 0.0, pass_side: str = "auto") -> "ObstacleBox":
        """Bounding box, in the road frame, of a planar polygon's corners."""
        pts = np.asarray(corners, dtype=float).reshape(-1, 2)
        frenet = np.array([global_to_frenet(line, p)[:2] for p in pts])
        return cls(
            s_min=float(frenet[:, 0].min()),
            s_max=float(frenet[:, 0].max()),
            ey_min=float(frenet[:, 1].min()),
            ey_max=float(frenet[:, 1].max()),
            inflation=inflation,
            speed=speed,
            pass_side=pass_side,
        )


@dataclass(frozen=True)
class SpatialGrid:
    """Strictly increasing discretization stations along the road."""

    stations: np.ndarray
    steps: np.ndarray = field(init=False)

    def __post_init__(self):
        if len(self.stations) < 2:
            raise ValueError("grid needs at least 2 stations")
        steps = np.diff(self.stations)
        if np.any(steps <= 0):
            raise ValueError("grid stations must be strictly increasing")
        object.__setattr__(self, "steps", steps)

    @property
    def n_intervals(self) -> int:
        return len(self.stations) - 1

    def index_of(self, s: float, tol: float = DUPLICATE_STATION_TOL) -> int | None:
        """Index of the station equal to ``s`` within ``tol``, else None."""
        idx = int(np.searchsorted(self.stations, s))
        for j in (idx - 1, idx):
            if 0 <= j < len(self.stations) and abs(self.stations[j] - s) <= tol:
                return j
        return None


def build_grid(corridor: RoadCorridor, s_start: float, horizon: float,
               base_step: float, obstacles=(), extra_stations=()) -> SpatialGrid:
    """Uniform grid over ``[s_start, s_start + horizon]`` plus required stations.

    Inflated obstacle corner stations and any ``extra_stations`` (waypoint
    stations) inside the range are inserted; near-duplicates within
    ``DUPLICATE_STATION_TOL`` are merged.
    """
    if horizon <= 0.0 or base_step <= 0.0:
        raise ValueError("horizon and base_step must be positive")
    s_end = s_start + horizon
    if s_end > corridor.centerline.length + 1e-9:
        raise ValueError(
            f"horizon end {s_end:.3f} m exceeds centerline length "
            f"{corridor.centerline.length:.3f} m"
        )

    n = max(1, int(math.ceil(horizon / base_step - 1e-12)))
    stations = [np.linspace(s_start, s_end, n + 1)]
    for obs in obstacles:
        sa, sb, _, _ = obs.inflated
        stations.append(np.array([c for c in (sa, sb) if s_start < c < s_end]))
    if len(extra_stations):
        extra = np.asarray(extra_stations, dtype=float)
        stations.append(extra[(extra > s_start) & (extra < s_end)])

    merged = np.sort(np.concatenate(stations))
    keep = np.concatenate(([True], np.diff(merged) > DUPLICATE_STATION_TOL))
    merged = merged[keep]
    merged[0], merged[-1] = s_start, s_end
    return SpatialGrid(stations=merged)


def map_obstacles(corridor: RoadCorridor, grid: SpatialGrid, obstacles,
                  nominal_speed: float):
    """Per-station corridor bounds tightened around the obstacles.

    Each obstacle blocks one side; drifting obstacles are shifted per station
    by their drift velocity times the ego's nominal time of arrival at a
    constant ``nominal_speed``. Bounds are only ever tightened. Returns the
    ``(lower, upper)`` arrays over the grid stations.
    """
    if nominal_speed <= 0.0:
        raise ValueError("nominal_speed must be positive")
    lower, upper = corridor.bounds_at(grid.stations)
    lower, upper = np.array(lower, dtype=float), np.array(upper, dtype=float)

    for obs in obstacles:
        sa, sb, ea, eb = obs.inflated
        covered = _covered_stations(grid, sa, sb, obs.speed, nominal_speed)
        if not np.any(covered):
            continue
        side = obs.pass_side
        if side == "auto":
            free_left = float(np.min(upper[covered])) - eb
            free_right = ea - float(np.max(lower[covered]))
            side = "left" if free_left >= free_right else "right"
        if side == "left":
            lower[covered] = np.maximum(lower[covered], eb)
        else:
            upper[covered] = np.minimum(upper[covered], ea)

    gap = upper - lower
    if np.any(gap <= 1e-9):
        j = int(np.argmin(gap))
        raise CorridorBlockedError(
            f"obstacles block the full corridor width near "
            f"s={grid.stations[j]:.2f} m (interval {j})",
            interval=j,
        )
    return lower, upper


def _covered_stations(grid: SpatialGrid, sa: float, sb: float,
                      drift_speed: float, nominal_speed: float) -> np.ndarray:
    """Boolean mask of stations inside the obstacle extent at ego arrival time."""
    arrival = (grid.stations - grid.stations[0]) / nominal_speed
    lo = sa + drift_speed * arrival
    hi = sb + drift_speed * arrival
    return (grid.stations >= lo - 1e-9) & (grid.stations <= hi + 1e-9)
