"""Figure-eight reference trajectory with analytic derivatives.

The path is a Gerono-style 1:2 Lissajous figure-eight scaled to a
configurable bounding box, time-parametrized with a quadratic ease-in so
the reference starts at rest. Heading is tangent to the path (zero
lateral velocity), and the curve closes exactly at t = period.
"""

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import RobotGeometry, WheelRates, twist_to_wheels, wrap_angle


@dataclass(frozen=True)
class LemniscateConfig:
    length: float = 19.0  # bounding-box extent along x, meters
    width: float = 10.0  # bounding-box extent along y, meters
    period: float = 180.0  # seconds for one full traversal
    ramp_time: float = 10.0  # ease-in duration, seconds
    creep_fraction: float = 0.2  # initial progress rate / cruise rate

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("lemniscate dimensions must be positive")
        if not 0 <= self.ramp_time < self.period:
            raise ValueError("ramp_time must lie in [0, period)")
        if not 0 <= self.creep_fraction <= 1:
            raise ValueError("creep_fraction must lie in [0, 1]")

    @property
    def _ramp_deficit(self) -> float:
        # Progress lost to the ease-in relative to full cruise speed.
        return 0.5 * (1.0 - self.creep_fraction) * self.ramp_time

    @property
    def cruise_rate(self) -> float:
        # Cruise runs slightly faster than 2*pi/period so the curve still
        # closes exactly at t = period despite the ease-in.
        return 2.0 * math.pi / (self.period - self._ramp_deficit)


def path_progress(cfg: LemniscateConfig, t: float) -> tuple[float, float]:
    """Path parameter tau(t) in [0, 2*pi] and its time derivative.

    The parameter speed ramps linearly from creep_fraction of cruise to
    full cruise over ramp_time (C^1 in t), so the reference starts at a
    gentle creep rather than a dead stop.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    tr = cfg.ramp_time
    c0 = cfg.creep_fraction
    if tr > 0.0 and t < tr:
        p = c0 * t + (1.0 - c0) * t * t / (2.0 * tr)
        p_dot = c0 + (1.0 - c0) * t / tr
    else:
        p = t - cfg._ramp_deficit
        p_dot = 1.0
    w = cfg.cruise_rate
    return w * p, w * p_dot


def _curve(cfg: LemniscateConfig, tau: float):
    """Position and its first two tau-derivatives on the unit-rate curve."""
    a = 0.5 * cfg.length
    b = 0.5 * cfg.width
    pos = np.array([a * math.sin(tau), b * math.sin(2.0 * tau)])
    d1 = np.array([a * math.cos(tau), 2.0 * b * math.cos(2.0 * tau)])
    d2 = np.array([-a * math.sin(tau), -4.0 * b * math.sin(2.0 * tau)])
    return pos, d1, d2


def lemniscate_reference(cfg: LemniscateConfig, t: float):
    """Reference pose (x, y, yaw) and world velocity (xdot, ydot, yawdot).

    Yaw is the path tangent, wrapped to (-pi, pi]; the velocity is the
    exact time derivative of the (unwrapped) pose.
    """
    tau, tau_dot = path_progress(cfg, t)
    pos, d1, d2 = _curve(cfg, tau)
    speed2 = d1 @ d1
    heading = math.atan2(d1[1], d1[0])
    heading_rate_tau = (d1[0] * d2[1] - d1[1] * d2[0]) / speed2
    pose = np.array([pos[0], pos[1], wrap_angle(heading)])
    vel = np.array([d1[0] * tau_dot, d1[1] * tau_dot, heading_rate_tau * tau_dot])
    return pose, vel


def reference_twist(cfg: LemniscateConfig, t: float) -> tuple[float, float]:
    """Body forward speed and yaw rate along the reference at time t."""
    tau, tau_dot = path_progress(cfg, t)
    _, d1, d2 = _curve(cfg, tau)
    speed = math.sqrt(d1 @ d1) * tau_dot
    heading_rate = (d1[0] * d2[1] - d1[1] * d2[0]) / (d1 @ d1) * tau_dot
    return speed, heading_rate


def reference_wheel_rates(
    cfg: LemniscateConfig, geom: RobotGeometry, t: float
) -> WheelRates:
    """Open-loop per-side wheel rates realizing the reference twist."""
    v, w = reference_twist(cfg, t)
    return twist_to_wheels(v, w, geom)


def reference_window(cfg: LemniscateConfig, t0: float, dt: float, n: int):
    """Sample poses and velocities at t0 + k*dt for k = 0..n.

    Yaw samples are unwrapped to a continuous sequence along the window
    (consumers align the whole window to their own yaw representative).
    """
    poses = np.empty((n + 1, 3))
    vels = np.empty((n + 1, 3))
    for k in range(n + 1):
        pose, vel = lemniscate_reference(cfg, t0 + k * dt)
        poses[k] = pose
        vels[k] = vel
    for k in range(1, n + 1):
        poses[k, 2] = poses[k - 1, 2] + wrap_angle(poses[k, 2] - poses[k - 1, 2])
    return poses, vels


def max_wheel_demand(cfg: LemniscateConfig, geom: RobotGeometry, samples: int = 4000):
    """Largest per-side wheel rate demanded over one period (for sizing)."""
    worst = 0.0
    for i in range(samples + 1):
        t = cfg.period * i / samples
        rates = reference_wheel_rates(cfg, geom, t)
        worst = max(worst, abs(rates.right), abs(rates.left))
    return worst
