"""Actuation-level control: learned feedforward plus barrier-scaled feedback.

Per side, the actuator command is

    u = u_ff(rate_ref) - 0.5*prop*e - barrier_gain*e*B*chi

where e is the wheel-rate tracking error, B the pose-error barrier value
supplied by the safety supervisor, and chi an adaptive gain driven by

    chi' = -leak*chi + barrier_gain*e^2*B

integrated with explicit Euler at the low-level rate. The feedforward
u_ff evaluates the trained surrogate at the reference rate, through its
normalization maps. The "sdnn" mode runs the bare feedforward with all
feedback terms disabled.
"""

import math
from dataclasses import dataclass, field

from .kinematics import WheelRates, wrap_angle
from .mlp import SurrogateModel
from .safety import LatchReason, SafetyFault

MODES = ("rsdnn", "sdnn")


@dataclass(frozen=True)
class SideGains:
    """Feedback gains for one drive side (actuator units per rad/s)."""

    prop: float = 24000.0
    barrier_gain: float = 1500.0
    leak: float = 2.0
    adapt_init: float = 0.1

    def __post_init__(self):
        if min(self.prop, self.barrier_gain, self.leak, self.adapt_init) <= 0:
            raise ValueError("all gains must be strictly positive")


@dataclass(frozen=True)
class LowLevelConfig:
    right: SideGains = field(default_factory=SideGains)
    left: SideGains = field(default_factory=SideGains)
    mode: str = "rsdnn"
    yaw_weight: float = 1.0  # optional weighted pose norm; 1.0 = raw norm

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.yaw_weight < 0:
            raise ValueError("yaw_weight must be nonnegative")


def pose_error(measured, reference, yaw_weight: float = 1.0) -> float:
    """Euclidean norm of the pose difference, yaw wrapped.

    Units are mixed (meters and radians) by definition; yaw_weight
    rescales the angular term and defaults to the raw unweighted norm.
    """
    dx = measured[0] - reference[0]
    dy = measured[1] - reference[1]
    dyaw = wrap_angle(measured[2] - reference[2]) * yaw_weight
    err = math.sqrt(dx * dx + dy * dy + dyaw * dyaw)
    if not math.isfinite(err):
        raise SafetyFault(f"non-finite pose error from {measured!r} vs {reference!r}")
    return err


def feedback_terms(
    rate_err: float, barrier_val: float, chi: float, gains: SideGains
) -> float:
    """The two feedback terms of the control law (zero at zero error)."""
    return (
        -0.5 * gains.prop * rate_err
        - gains.barrier_gain * rate_err * barrier_val * chi
    )


def adapt_step(
    chi: float, rate_err: float, barrier_val: float, gains: SideGains, dt: float
) -> tuple[float, bool]:
    """Euler update of the adaptive gain; returns (new_chi, clamped)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    drive = gains.barrier_gain * rate_err * rate_err * barrier_val
    if not math.isfinite(drive):
        raise SafetyFault("non-finite adaptive drive term")
    chi_new = chi + dt * (-gains.leak * chi + drive)
    if chi_new < 0.0:
        return 0.0, True
    return chi_new, False


@dataclass
class SideTelemetry:
    rate_ref: float
    rate_meas: float
    rate_err: float
    adapt_gain: float
    barrier: float
    u_ff: float
    u_total: float


class LowLevelController:
    """Two-sided actuation controller run by the 1 kHz loop."""

    def __init__(self, cfg: LowLevelConfig, model: SurrogateModel, wheel_radius: float):
        self.cfg = cfg
        self.model = model
        self.wheel_radius = wheel_radius
        self.chi = {
            "R": cfg.right.adapt_init,
            "L": cfg.left.adapt_init,
        }
        self.clamp_events = 0

    def reset(self) -> None:
        self.chi = {
            "R": self.cfg.right.adapt_init,
            "L": self.cfg.left.adapt_init,
        }
        self.clamp_events = 0

    def _side(
        self, side: str, gains: SideGains, rate_ref, rate_msr, barrier_val, dt
    ) -> SideTelemetry:
        u_ff = self.model.sides[side].command(self.wheel_radius * rate_ref)
        if self.cfg.mode == "sdnn":
            u_total = u_ff
            err = rate_msr - rate_ref
        else:
            err = rate_msr - rate_ref
            u_total = u_ff + feedback_terms(err, barrier_val, self.chi[side], gains)
            chi_new, clamped = adapt_step(
                self.chi[side], err, barrier_val, gains, dt
            )
            self.chi[side] = chi_new
            self.clamp_events += clamped
        if not math.isfinite(u_total):
            raise SafetyFault(
                f"non-finite actuator command on side {side}",
                LatchReason.NUMERICAL_FAULT,
            )
        return SideTelemetry(
            rate_ref=rate_ref,
            rate_meas=rate_msr,
            rate_err=err,
            adapt_gain=self.chi[side],
            barrier=barrier_val,
            u_ff=u_ff,
            u_total=u_total,
        )

    def step(
        self,
        rate_ref: WheelRates,
        rate_msr: WheelRates,
        barrier_val: float,
        dt: float,
    ) -> tuple[SideTelemetry, SideTelemetry]:
        """One control tick; returns per-side telemetry (right, left)."""
        right = self._side(
            "R", self.cfg.right, rate_ref.right, rate_msr.right, barrier_val, dt
        )
        left = self._side(
            "L", self.cfg.left, rate_ref.left, rate_msr.left, barrier_val, dt
        )
        return right, left
