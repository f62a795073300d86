"""Road-aligned kinematic bicycle model and its affine stage models.

State is ``z = [e_psi, e_y]`` (heading error, lateral offset) with the road
station ``s`` as the independent variable. The state equations are independent
of speed; travel time enters separately through the inverse-speed control
``q = 1/v``, which keeps the propagated time strictly increasing for any
positive ``q`` (the direct linearization in ``v`` does not, see
``naive_time_linearization``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PoleViolationError
from .geometry import SpatialGrid

# References must keep a margin from the model poles at cos(e_psi) = 0 and
# 1 - kappa * e_y = 0.
COS_GUARD = 0.05
RADIUS_GUARD = 0.05
EPSI_CLIP = 1.2  # rad; acos(COS_GUARD) ~ 1.52, so 1.2 stays comfortably inside


@dataclass(frozen=True)
class VehicleParams:
    """Geometry, actuator, and friction limits of the planned vehicle."""

    wheelbase: float          # m, rear axle (CoG) to front axle
    front_length: float       # m, CoG to front bumper
    rear_length: float        # m, CoG to rear bumper
    half_width: float         # m
    steer_min: float          # rad
    steer_max: float          # rad
    accel_min: float          # m/s^2 (braking, negative)
    accel_max: float          # m/s^2
    steer_rate_min: float     # rad/s (negative)
    steer_rate_max: float     # rad/s
    friction: float           # tire-road friction coefficient
    gravity: float = 9.81     # m/s^2

    def __post_init__(self):
        if self.wheelbase <= 0.0:
            raise ValueError("wheelbase must be positive")
        if not (self.front_length > self.half_width > 0.0):
            raise ValueError("requires front_length > half_width > 0")
        if not (self.steer_min < 0.0 < self.steer_max):
            raise ValueError("steer bounds must straddle 0")
        if not (self.accel_min < 0.0 < self.accel_max):
            raise ValueError("accel bounds must straddle 0")
        if not (self.steer_rate_min < 0.0 < self.steer_rate_max):
            raise ValueError("steer rate bounds must straddle 0")
        if not (0.0 < self.friction <= 1.2):
            raise ValueError("friction must lie in (0, 1.2]")


@dataclass(frozen=True)
class SpatialState:
    """Road-aligned state sample."""

    e_psi: float
    e_y: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e_psi, self.e_y])


@dataclass(frozen=True)
class ControlSample:
    """Control sample in inverse-speed coordinates."""

    q: float      # s/m, inverse speed
    delta: float  # rad, front steering angle

    @property
    def v(self) -> float:
        return 1.0 / self.q

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.delta])


@dataclass(frozen=True)
class AffineStageModel:
    """Affine propagation over one grid interval.

    ``z_next = a @ z + b @ u + g`` with ``u = [q, delta]``, plus the travel
    time update ``t_next = t + time_coeff * q`` (``time_coeff`` in meters).
    """

    a: np.ndarray          # (2, 2)
    b: np.ndarray          # (2, 2); the q column is zero
    g: np.ndarray          # (2,)
    time_coeff: float

    def __post_init__(self):
        if self.time_coeff <= 0.0:
            raise ValueError("time coefficient must be positive")


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Linearization references along the grid: N+1 states, N controls."""

    e_psi: np.ndarray
    e_y: np.ndarray
    q: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        if len(self.e_psi) != len(self.e_y) or len(self.q) != len(self.delta):
            raise ValueError("inconsistent reference lengths")
        if len(self.e_psi) != len(self.q) + 1:
            raise ValueError("need one more state reference than control references")
        if np.any(self.q <= 0.0):
            raise ValueError("reference inverse speeds must be positive")


def _check_poles(e_psi: float, e_y: float, kappa: float, guarded: bool = False,
                 where: str = "") -> tuple[float, float]:
    cos_epsi = math.cos(e_psi)
    radius_factor = 1.0 - kappa * e_y
    bad = cos_epsi < 1e-9 or radius_factor < 1e-9
    if guarded:
        bad = bad or cos_epsi < COS_GUARD or radius_factor < RADIUS_GUARD
    if bad:
        suffix = f" at {where}" if where else ""
        raise PoleViolationError(
            f"operating point{suffix} too close to a model pole: "
            f"cos(e_psi)={cos_epsi:.4f}, 1-kappa*e_y={radius_factor:.4f}"
        )
    return cos_epsi, radius_factor


def spatial_dynamics(z, u, road_curvature: float, road_heading_rate: float,
                     params: VehicleParams) -> np.ndarray:
    """Spatial derivative ``dz/ds`` of the road-aligned bicycle model.

    Independent of the speed channel ``u[0]``; only the steering angle
    ``u[1]`` enters.
    """
    e_psi, e_y = float(z[0]), float(z[1])
    delta = float(u[1])
    cos_epsi, radius_factor = _check_poles(e_psi, e_y, road_curvature)
    de_psi = radius_factor * math.tan(delta) / (params.wheelbase * cos_epsi) - road_heading_rate
    de_y = radius_factor * math.tan(e_psi)
    return np.array([de_psi, de_y])


def dynamics_jacobians(z, u, road_curvature: float, params: VehicleParams):
    """Analytic Jacobians ``(df/dz, df/du)`` of :func:`spatial_dynamics`."""
    e_psi, e_y = float(z[0]), float(z[1])
    delta = float(u[1])
    cos_epsi, radius_factor = _check_poles(e_psi, e_y, road_curvature)
    tan_delta = math.tan(delta)
    length = params.wheelbase

    dfdz = np.array([
        [radius_factor * tan_delta * math.sin(e_psi) / (length * cos_epsi ** 2),
         -road_curvature * tan_delta / (length * cos_epsi)],
        [radius_factor / cos_epsi ** 2,
         -road_curvature * math.tan(e_psi)],
    ])
    dfdu = np.array([
        [0.0, radius_factor / (length * cos_epsi * math.cos(delta) ** 2)],
        [0.0, 0.0],
    ])
    return dfdz, dfdu


def time_coefficient(step: float, road_curvature: float, e_y_ref: float,
                     e_psi_ref: float) -> float:
    """Meters of time-chain coefficient: ``t_next = t + coeff * q``.

    Evaluates ``step * (1 - kappa * e_y_ref) / cos(e_psi_ref)``, which is
    positive whenever the reference respects the pole guards, so propagated
    time is strictly increasing for any positive inverse speed.
    """
    cos_epsi, radius_factor = _check_poles(e_psi_ref, e_y_ref, road_curvature)
    return step * radius_factor / cos_epsi


def time_coefficient_dynamic(step: float, road_curvature: float, e_y_ref: float,
                             e_psi_ref: float) -> float:
    """Time-chain coefficient for dynamic-model planning.

    Same closed form as :func:`time_coefficient`, but the multiplying control
    is the inverse *longitudinal* body velocity ``1/v_x``; the lateral
    velocity is deliberately dropped so time stays strictly increasing.
    """
    return time_coefficient(step, road_curvature, e_y_ref, e_psi_ref)


def naive_time_linearization(z_ref, v_ref: float, z, v: float, step: float,
                             road_curvature: float) -> float:
    """First-order time step linearized directly in ``v`` (demonstration only).

    This expansion of the travel-time relation about ``(z_ref, v_ref)`` turns
    negative once ``v > 2 v_ref`` at matched states, which is why the planner
    uses the inverse-speed form instead. Kept as a test/diagnostic operation.
    """
    if v_ref <= 0.0:
        raise ValueError("v_ref must be positive")
    e_psi_r, e_y_r = float(z_ref[0]), float(z_ref[1])
    cos_r, radius_r = _check_poles(e_psi_r, e_y_r, road_curvature)
    f_ref = radius_r / (v_ref * cos_r)
    d_epsi = f_ref * math.sin(e_psi_r) / cos_r
    d_ey = -road_curvature / (v_ref * cos_r)
    d_v = -radius_r / (v_ref ** 2 * cos_r)
    rate = (f_ref
            + d_epsi * (float(z[0]) - e_psi_r)
            + d_ey * (float(z[1]) - e_y_r)
            + d_v * (v - v_ref))
    return step * rate


def linearize_discretize(grid: SpatialGrid, refs: ReferenceTrajectory,
                         road_curvature, road_heading_rate,
                         params: VehicleParams) -> list[AffineStageModel]:
    """Forward-Euler affine stage models about the references, one per interval.

    ``road_curvature`` and ``road_heading_rate`` are per-station arrays. The
    references must respect the pole guards with margin; violations raise
    with the offending station named.
    """
    n = grid.n_intervals
    if len(refs.q) != n or len(refs.e_psi) != n + 1:
        raise ValueError("reference lengths do not match the grid")
    kappa = np.asarray(road_curvature, dtype=float)
    psi_rate = np.asarray(road_heading_rate, dtype=float)
    if len(kappa) != n + 1 or len(psi_rate) != n + 1:
        raise ValueError("road arrays must have one value per station")

    stages = []
    eye = np.eye(2)
    for j in range(n):
        z_ref = np.array([refs.e_psi[j], refs.e_y[j]])
        u_ref = np.array([refs.q[j], refs.delta[j]])
        _check_poles(z_ref[0], z_ref[1], kappa[j], guarded=True,
                     where=f"station {j} (s={grid.stations[j]:.2f})")
        step = float(grid.steps[j])
        f_ref = spatial_dynamics(z_ref, u_ref, kappa[j], psi_rate[j], params)
        dfdz, dfdu = dynamics_jacobians(z_ref, u_ref, kappa[j], params)
        stages.append(AffineStageModel(
            a=eye + step * dfdz,
            b=step * dfdu,
            g=step * (f_ref - dfdz @ z_ref - dfdu @ u_ref),
            time_coeff=time_coefficient(step, kappa[j], z_ref[1], z_ref[0]),
        ))
    return stages
