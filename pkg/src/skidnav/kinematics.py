"""Planar rigid-body math for a skid-steering robot.

Per-side wheel rates map to a body twist through the differential-drive
Jacobian; the body twist is carried to the world frame by the planar
adjoint (a rotation of the linear part) and integrated numerically.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

_TWO_PI = 2.0 * math.pi


class Pose2(NamedTuple):
    """Planar pose (x, y, yaw) with yaw kept in (-pi, pi]."""

    x: float
    y: float
    yaw: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw], dtype=float)

    @staticmethod
    def from_array(arr) -> "Pose2":
        return Pose2(float(arr[0]), float(arr[1]), wrap_angle(float(arr[2])))


class BodyTwist(NamedTuple):
    """Body-frame twist; v_y stays zero for wheel-generated motion."""

    v_x: float
    v_y: float
    omega_z: float


class WheelRates(NamedTuple):
    """Per-side wheel angular velocities, rad/s."""

    right: float
    left: float


@dataclass(frozen=True)
class RobotGeometry:
    """Wheel radius and half lateral track width, meters."""

    wheel_radius: float
    half_track: float

    def __post_init__(self):
        if not (self.wheel_radius > 0.0 and self.half_track > 0.0):
            raise ValueError("geometry requires wheel_radius > 0 and half_track > 0")


def wrap_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]; exact identity on in-range values."""
    if -math.pi < angle <= math.pi:
        return angle
    wrapped = (angle + math.pi) % _TWO_PI - math.pi
    if wrapped <= -math.pi:
        wrapped += _TWO_PI
    return wrapped


def angle_diff(a: float, b: float) -> float:
    """Shortest signed angular difference a - b, wrapped to (-pi, pi]."""
    return wrap_angle(a - b)


def drive_jacobian(geom: RobotGeometry) -> np.ndarray:
    """3x2 map from per-side wheel rates to the body twist."""
    r = geom.wheel_radius
    c = geom.half_track
    return np.array(
        [
            [r / 2.0, r / 2.0],
            [0.0, 0.0],
            [r / (2.0 * c), -r / (2.0 * c)],
        ]
    )


def wheel_to_twist(rates: WheelRates, geom: RobotGeometry) -> BodyTwist:
    """Body twist produced by per-side wheel rates (lateral velocity zero)."""
    r = geom.wheel_radius
    v_x = 0.5 * r * (rates.right + rates.left)
    omega = 0.5 * r / geom.half_track * (rates.right - rates.left)
    return BodyTwist(v_x, 0.0, omega)


def twist_to_wheels(v_x: float, omega_z: float, geom: RobotGeometry) -> WheelRates:
    """Invert the drive map: the wheel rates realizing (v_x, omega_z)."""
    r = geom.wheel_radius
    c = geom.half_track
    return WheelRates((v_x + c * omega_z) / r, (v_x - c * omega_z) / r)


def twist_to_world(pose: Pose2, twist: BodyTwist) -> np.ndarray:
    """World-frame pose velocity (xdot, ydot, yawdot) of a body twist.

    The linear part rotates by the pose yaw; the angular rate passes
    through unchanged (planar adjoint at the body's own frame).
    """
    cy = math.cos(pose.yaw)
    sy = math.sin(pose.yaw)
    return np.array(
        [
            cy * twist.v_x - sy * twist.v_y,
            sy * twist.v_x + cy * twist.v_y,
            twist.omega_z,
        ]
    )


def integrate_pose(
    pose: Pose2,
    rates: WheelRates,
    geom: RobotGeometry,
    dt: float,
    scheme: str = "rk4",
) -> Pose2:
    """Advance a pose under constant wheel rates; yaw re-wrapped.

    scheme: "euler" or "rk4".
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x = pose.as_array()
    u = np.array([rates.right, rates.left])
    if scheme == "euler":
        x_next = step_euler(x, u, geom, dt)
    elif scheme == "rk4":
        x_next = step_rk4(x, u, geom, dt)
    else:
        raise ValueError(f"unknown integration scheme: {scheme!r}")
    return Pose2.from_array(x_next)


# --- Array-level kinematics used by the NMPC internal model. -------------
# Yaw is NOT wrapped here: the optimizer needs smooth dynamics on R^3.


def velocity(x: np.ndarray, u: np.ndarray, geom: RobotGeometry) -> np.ndarray:
    """Pose velocity f(x, u) for pose array x=(x,y,yaw), rates u=(right,left)."""
    r = geom.wheel_radius
    v = 0.5 * r * (u[0] + u[1])
    w = 0.5 * r / geom.half_track * (u[0] - u[1])
    cy = math.cos(x[2])
    sy = math.sin(x[2])
    return np.array([cy * v, sy * v, w])


def velocity_jacobians(x, u, geom: RobotGeometry):
    """d f / d x (3x3) and d f / d u (3x2) at (x, u)."""
    r = geom.wheel_radius
    c = geom.half_track
    v = 0.5 * r * (u[0] + u[1])
    cy = math.cos(x[2])
    sy = math.sin(x[2])
    fx = np.zeros((3, 3))
    fx[0, 2] = -sy * v
    fx[1, 2] = cy * v
    fu = np.array(
        [
            [0.5 * r * cy, 0.5 * r * cy],
            [0.5 * r * sy, 0.5 * r * sy],
            [0.5 * r / c, -0.5 * r / c],
        ]
    )
    return fx, fu


def step_euler(x, u, geom: RobotGeometry, dt: float) -> np.ndarray:
    return x + dt * velocity(x, u, geom)


def step_rk4(x, u, geom: RobotGeometry, dt: float) -> np.ndarray:
    k1 = velocity(x, u, geom)
    k2 = velocity(x + 0.5 * dt * k1, u, geom)
    k3 = velocity(x + 0.5 * dt * k2, u, geom)
    k4 = velocity(x + dt * k3, u, geom)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_euler_jacobians(x, u, geom: RobotGeometry, dt: float):
    """State/control Jacobians of the explicit-Euler step."""
    fx, fu = velocity_jacobians(x, u, geom)
    return np.eye(3) + dt * fx, dt * fu


def step_rk4_jacobians(x, u, geom: RobotGeometry, dt: float):
    """State/control Jacobians of the RK4 step (chain rule over stages)."""
    eye = np.eye(3)
    k1 = velocity(x, u, geom)
    f1x, f1u = velocity_jacobians(x, u, geom)
    x2 = x + 0.5 * dt * k1
    k2 = velocity(x2, u, geom)
    f2x, f2u = velocity_jacobians(x2, u, geom)
    k2x = f2x @ (eye + 0.5 * dt * f1x)
    k2u = f2u + f2x @ (0.5 * dt * f1u)
    x3 = x + 0.5 * dt * k2
    k3 = velocity(x3, u, geom)
    f3x, f3u = velocity_jacobians(x3, u, geom)
    k3x = f3x @ (eye + 0.5 * dt * k2x)
    k3u = f3u + f3x @ (0.5 * dt * k2u)
    x4 = x + dt * k3
    f4x, f4u = velocity_jacobians(x4, u, geom)
    k4x = f4x @ (eye + dt * k3x)
    k4u = f4u + f4x @ (dt * k3u)
    ax = eye + dt / 6.0 * (f1x + 2.0 * k2x + 2.0 * k3x + k4x)
    au = dt / 6.0 * (f1u + 2.0 * k2u + 2.0 * k3u + k4u)
    return ax, au


def discrete_step(x, u, geom: RobotGeometry, dt: float, scheme: str) -> np.ndarray:
    if scheme == "euler":
        return step_euler(x, u, geom, dt)
    if scheme == "rk4":
        return step_rk4(x, u, geom, dt)
    raise ValueError(f"unknown integration scheme: {scheme!r}")


def discrete_step_jacobians(x, u, geom: RobotGeometry, dt: float, scheme: str):
    if scheme == "euler":
        return step_euler_jacobians(x, u, geom, dt)
    if scheme == "rk4":
        return step_rk4_jacobians(x, u, geom, dt)
    raise ValueError(f"unknown integration scheme: {scheme!r}")
