"""Synthetic ground-truth robot: actuation dynamics, terrain slip, sensors.

All constants here are artifact choices defining the simulated machine,
documented as synthetic ground truth. Each drive side is a black box from
the controller's point of view: a static input nonlinearity (input
saturation, deadband, cubic softening) feeds a first-order drive lag,
whose output torque drives a rotational inertia against viscous plus
smoothed Coulomb friction:

    lag'  = (g(u) - lag) / lag_tau
    rate' = (lag - viscous*rate - coulomb*tanh(rate/smooth) + d) / inertia

g and the friction law are Lipschitz on the operating box (|g'| <=
drive_gain, |F'| <= viscous + coulomb/smooth), and the disturbance d is
bounded by construction, so the closed-loop assumptions of the control
layer hold for this plant.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .kinematics import Pose2, RobotGeometry, WheelRates, integrate_pose, wrap_angle


@dataclass(frozen=True)
class ActuationParams:
    """One drive side of the synthetic machine (SI units; u in RPM)."""

    inertia: float = 2.0
    viscous: float = 5.0
    coulomb: float = 0.005
    coulomb_smooth: float = 5e-3
    lag_tau: float = 0.02
    drive_gain: float = 0.003
    deadband: float = 5.0
    cubic_soft: float = 5e-8
    u_rated: float = 2000.0

    def __post_init__(self):
        if self.inertia <= 0 or self.viscous <= 0 or self.lag_tau <= 0:
            raise ValueError("inertia, viscous and lag_tau must be positive")
        span = self.u_rated - self.deadband
        if self.cubic_soft * 3.0 * span * span >= 1.0:
            raise ValueError("cubic softening would make the static map non-monotone")

    def static_map(self, u: float) -> float:
        """Drive torque for an actuator signal: saturation, deadband, cubic."""
        u = min(max(u, -self.u_rated), self.u_rated)
        mag = abs(u) - self.deadband
        if mag <= 0.0:
            return 0.0
        w = math.copysign(mag, u)
        return self.drive_gain * (w - self.cubic_soft * w * w * w)

    def friction(self, rate: float) -> float:
        return -self.viscous * rate - self.coulomb * math.tanh(
            rate / self.coulomb_smooth
        )


class ActuationState(NamedTuple):
    """Wheel rate (rad/s) and internal drive-lag state (torque units)."""

    rate: float
    lag: float


def step_actuation(
    state: ActuationState,
    params: ActuationParams,
    u: float,
    dt: float,
    disturbance: float = 0.0,
) -> ActuationState:
    """Advance one side by dt (RK4; u and disturbance held over the step)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    g = params.static_map(u)
    inv_tau = 1.0 / params.lag_tau
    inv_a = 1.0 / params.inertia

    def deriv(rate, lag):
        return (
            (lag + params.friction(rate) + disturbance) * inv_a,
            (g - lag) * inv_tau,
        )

    r0, l0 = state
    k1r, k1l = deriv(r0, l0)
    k2r, k2l = deriv(r0 + 0.5 * dt * k1r, l0 + 0.5 * dt * k1l)
    k3r, k3l = deriv(r0 + 0.5 * dt * k2r, l0 + 0.5 * dt * k2l)
    k4r, k4l = deriv(r0 + dt * k3r, l0 + dt * k3l)
    return ActuationState(
        r0 + dt / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r),
        l0 + dt / 6.0 * (k1l + 2 * k2l + 2 * k3l + k4l),
    )


def steady_state_rate(params: ActuationParams, u: float) -> float:
    """Root of g(u) + F(rate) = 0 by bisection (reference, not hot path)."""
    g = params.static_map(u)
    lo, hi = -5.0, 5.0

    def balance(rate):
        return g + params.friction(rate)

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if balance(lo) * balance(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# --- Terrain ---------------------------------------------------------------


@dataclass(frozen=True)
class SlipBump:
    """Gaussian slip patch; peaks are per-side (right, left)."""

    x: float
    y: float
    sigma: float
    peak_right: float
    peak_left: float


@dataclass(frozen=True)
class TerrainProfile:
    """Deterministic spatial slip field, slip ratios clamped to [0, 0.9]."""

    kind: str
    base_slip: float = 0.0
    bumps: tuple[SlipBump, ...] = ()

    def slip_at(self, x: float, y: float) -> tuple[float, float]:
        s_r = self.base_slip
        s_l = self.base_slip
        for b in self.bumps:
            w = math.exp(-((x - b.x) ** 2 + (y - b.y) ** 2) / (2.0 * b.sigma**2))
            s_r += b.peak_right * w
            s_l += b.peak_left * w
        return min(max(s_r, 0.0), 0.9), min(max(s_l, 0.0), 0.9)


def asphalt() -> TerrainProfile:
    # Near-ideal traction; open-loop drift over a full run stays small.
    return TerrainProfile(kind="asphalt", base_slip=0.002)


def soft_soil() -> TerrainProfile:
    # Loose ground with two asymmetric high-slip patches placed on the
    # sharp-turn corners of the default figure-eight course.
    return TerrainProfile(
        kind="soft-soil",
        base_slip=0.04,
        bumps=(
            SlipBump(x=6.7, y=4.7, sigma=1.5, peak_right=0.28, peak_left=0.10),
            SlipBump(x=-6.7, y=-4.7, sigma=1.5, peak_right=0.10, peak_left=0.28),
        ),
    )


TERRAINS = {"asphalt": asphalt, "soft-soil": soft_soil}


def apply_slip(
    rates_true: WheelRates, pose: Pose2, terrain: TerrainProfile
) -> WheelRates:
    """Ground-effective wheel rates; slip never reverses a wheel."""
    s_r, s_l = terrain.slip_at(pose.x, pose.y)
    return WheelRates((1.0 - s_r) * rates_true.right, (1.0 - s_l) * rates_true.left)


# --- Disturbances ----------------------------------------------------------


@dataclass(frozen=True)
class DisturbanceConfig:
    """Bounded torque disturbances: filtered noise, terrain load, steps."""

    max_torque: float = 2.0
    noise_std: float = 0.0
    noise_cutoff_hz: float = 2.0
    terrain_load_gain: float = 0.0  # torque per (slip ratio * rad/s)
    steps: tuple[tuple[float, float, float], ...] = ()  # (t_on, t_off, torque)


class DisturbanceGenerator:
    """Per-side disturbance streams, deterministic given the seed."""

    def __init__(self, cfg: DisturbanceConfig, seed: int):
        self.cfg = cfg
        self._rng = np.random.default_rng(seed)
        self._filtered = [0.0, 0.0]

    def sample(
        self,
        t: float,
        dt: float,
        slips: tuple[float, float],
        rates: WheelRates,
    ) -> tuple[float, float]:
        cfg = self.cfg
        out = []
        alpha = min(1.0, 2.0 * math.pi * cfg.noise_cutoff_hz * dt)
        for i, (slip, rate) in enumerate(zip(slips, rates)):
            d = -cfg.terrain_load_gain * slip * rate
            if cfg.noise_std > 0.0:
                white = self._rng.normal(0.0, cfg.noise_std)
                self._filtered[i] += alpha * (white - self._filtered[i])
                d += self._filtered[i]
            for t_on, t_off, torque in cfg.steps:
                if t_on <= t < t_off:
                    d += torque
            out.append(min(max(d, -cfg.max_torque), cfg.max_torque))
        return out[0], out[1]


# --- Sensors ---------------------------------------------------------------


@dataclass(frozen=True)
class SensorConfig:
    pose_rate_hz: float = 20.0
    wheel_rate_hz: float = 1000.0
    pose_noise_std: tuple[float, float, float] = (0.02, 0.02, 0.002)
    wheel_noise_std: float = 0.002
    seed: int = 0

    def __post_init__(self):
        if self.pose_rate_hz <= 0 or self.wheel_rate_hz < self.pose_rate_hz:
            raise ValueError("need wheel_rate_hz >= pose_rate_hz > 0")


def _on_tick(t: float, rate_hz: float) -> bool:
    k = t * rate_hz
    return abs(k - round(k)) < 1e-6


class PoseSensor:
    """Noisy pose provider publishing only on its rate's tick boundaries."""

    def __init__(self, cfg: SensorConfig, seed: int | None = None):
        self.cfg = cfg
        self._rng = np.random.default_rng(cfg.seed if seed is None else seed)

    def sample(self, true_pose: Pose2, t: float) -> Pose2 | None:
        if not _on_tick(t, self.cfg.pose_rate_hz):
            return None
        sx, sy, syaw = self.cfg.pose_noise_std
        nx = self._rng.normal(0.0, sx) if sx > 0 else 0.0
        ny = self._rng.normal(0.0, sy) if sy > 0 else 0.0
        nyaw = self._rng.normal(0.0, syaw) if syaw > 0 else 0.0
        return Pose2.from_array(
            [true_pose.x + nx, true_pose.y + ny, true_pose.yaw + nyaw]
        )


class WheelRateSensor:
    """Noisy per-side wheel-rate measurement at the fast sensor rate."""

    def __init__(self, cfg: SensorConfig, seed: int | None = None):
        self.cfg = cfg
        self._rng = np.random.default_rng(cfg.seed if seed is None else seed)

    def sample(self, rates: WheelRates, t: float) -> WheelRates | None:
        if not _on_tick(t, self.cfg.wheel_rate_hz):
            return None
        std = self.cfg.wheel_noise_std
        if std <= 0:
            return rates
        return WheelRates(
            rates.right + self._rng.normal(0.0, std),
            rates.left + self._rng.normal(0.0, std),
        )


def sample_pose(true_pose: Pose2, sensor: PoseSensor, t: float) -> Pose2 | None:
    return sensor.sample(true_pose, t)


def sample_wheel_rates(
    rates: WheelRates, sensor: WheelRateSensor, t: float
) -> WheelRates | None:
    return sensor.sample(rates, t)


# --- Whole-robot plant ------------------------------------------------------


def default_right_side() -> ActuationParams:
    return ActuationParams()


def default_left_side() -> ActuationParams:
    # Slight asymmetry so the two sides genuinely need separate surrogates.
    return ActuationParams(inertia=2.2, viscous=5.3, drive_gain=0.0029)


@dataclass
class Plant:
    """Ground-truth robot state advanced at the simulation master rate."""

    geom: RobotGeometry
    right: ActuationParams = field(default_factory=default_right_side)
    left: ActuationParams = field(default_factory=default_left_side)
    terrain: TerrainProfile = field(default_factory=asphalt)
    pose: Pose2 = Pose2(0.0, 0.0, 0.0)
    state_right: ActuationState = ActuationState(0.0, 0.0)
    state_left: ActuationState = ActuationState(0.0, 0.0)

    def wheel_rates(self) -> WheelRates:
        return WheelRates(self.state_right.rate, self.state_left.rate)

    def effective_rates(self) -> WheelRates:
        return apply_slip(self.wheel_rates(), self.pose, self.terrain)

    def step(self, u_right: float, u_left: float, dt: float, d=(0.0, 0.0)) -> None:
        # Pose advances under the rates held from the start of the tick,
        # then the actuation states move; matches a zero-order-hold plant.
        # Scalar RK4 on the pose (equivalent to kinematics.integrate_pose,
        # kept inline for the 1 kHz loop).
        eff_r, eff_l = self.effective_rates()
        geom = self.geom
        v = 0.5 * geom.wheel_radius * (eff_r + eff_l)
        w = 0.5 * geom.wheel_radius / geom.half_track * (eff_r - eff_l)
        x, y, yaw = self.pose
        k1c, k1s = math.cos(yaw), math.sin(yaw)
        y2 = yaw + 0.5 * dt * w
        k2c, k2s = math.cos(y2), math.sin(y2)
        y4 = yaw + dt * w
        k4c, k4s = math.cos(y4), math.sin(y4)
        sixth = dt / 6.0 * v
        self.pose = Pose2(
            x + sixth * (k1c + 4.0 * k2c + k4c),
            y + sixth * (k1s + 4.0 * k2s + k4s),
            wrap_angle(yaw + dt * w),
        )
        self.state_right = step_actuation(self.state_right, self.right, u_right, dt, d[0])
        self.state_left = step_actuation(self.state_left, self.left, u_left, dt, d[1])
