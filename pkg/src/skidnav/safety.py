"""Safety supervisor: barrier guard, speed capping, braking, SafeStop latch.

The pose-error barrier log^2(bound / (bound - err)) blows up as the error
approaches the bound; the supervisor owns the near-singular region. It
caps commanded speeds as the error grows, ramps commands to zero on a
deterministic braking profile once the margin is crossed, and latches a
zero-motion SafeStop on barrier violation, E-stop, or numerical fault.
SafeStop is absorbing until an explicit operator reset.
"""

import math
from dataclasses import dataclass
from enum import Enum

from .kinematics import WheelRates


class SafetyState(Enum):
    RUNNING = "Running"
    BRAKING = "Braking"
    SAFE_STOP = "SafeStop"


class LatchReason(Enum):
    NONE = "None"
    BARRIER_EXCEEDED = "BarrierExceeded"
    ESTOP = "EStop"
    NUMERICAL_FAULT = "NumericalFault"


class SafetyFault(RuntimeError):
    """Raised when a value enters the region the supervisor must own."""

    def __init__(self, message: str, reason: LatchReason = LatchReason.NUMERICAL_FAULT):
        super().__init__(message)
        self.reason = reason


@dataclass(frozen=True)
class SafetyConfig:
    bound: float = 0.4  # pose-error bound O, meters-equivalent
    margin: float = 0.95  # braking starts at margin * bound
    taper_start: float = 0.8  # capping starts at taper_start * bound
    taper_floor: float = 0.25  # cap factor reached at margin * bound
    brake_decel: float = 0.2  # rad/s^2 applied to each wheel command
    recovery_fraction: float = 0.5  # Braking -> Running below this * bound

    def __post_init__(self):
        if self.bound <= 0:
            raise ValueError("safety bound must be positive")
        if not 0 < self.taper_start < self.margin < 1:
            raise ValueError("need 0 < taper_start < margin < 1")
        if not 0 < self.recovery_fraction < self.margin:
            raise ValueError("recovery fraction must sit below the margin")
        if self.brake_decel <= 0 or not 0 < self.taper_floor <= 1:
            raise ValueError("brake_decel and taper_floor must be positive")


def log_barrier(err: float, bound: float) -> float:
    """log^2(bound / (bound - err)); zero at err = 0, unbounded at the bound."""
    if not 0.0 <= err < bound:
        raise SafetyFault(
            f"barrier undefined for pose error {err!r} with bound {bound!r}",
            LatchReason.BARRIER_EXCEEDED,
        )
    return math.log(bound / (bound - err)) ** 2


def guard_barrier(err: float, cfg: SafetyConfig) -> float:
    """Barrier value while safely inside the margin; fault otherwise."""
    if not math.isfinite(err) or err < 0.0:
        raise SafetyFault(f"non-finite or negative pose error: {err!r}")
    if err >= cfg.margin * cfg.bound:
        raise SafetyFault(
            f"pose error {err:.4f} inside the guarded margin "
            f"{cfg.margin * cfg.bound:.4f}",
            LatchReason.BARRIER_EXCEEDED,
        )
    return log_barrier(err, cfg.bound)


@dataclass(frozen=True)
class SafetyStatus:
    state: SafetyState
    pose_err: float
    bound: float
    reason: LatchReason
    cap_factor: float


class Supervisor:
    """Deterministic safety state machine driven at the low-level rate."""

    def __init__(self, cfg: SafetyConfig):
        self.cfg = cfg
        self.state = SafetyState.RUNNING
        self.reason = LatchReason.NONE
        self._pose_err = 0.0
        self._brake_start: WheelRates | None = None
        self._brake_ticks = 0
        self._last_output = WheelRates(0.0, 0.0)

    # -- state machine -------------------------------------------------

    def monitor(self, pose_err: float, estop: bool = False, fault: bool = False):
        """Advance the state machine with the held pose error."""
        cfg = self.cfg
        if not math.isfinite(pose_err):
            fault = True
            pose_err = float("inf")
        self._pose_err = pose_err
        if self.state is not SafetyState.SAFE_STOP:
            if fault:
                self._latch(LatchReason.NUMERICAL_FAULT)
            elif estop:
                self._latch(LatchReason.ESTOP)
            elif pose_err >= cfg.bound:
                self._latch(LatchReason.BARRIER_EXCEEDED)
            elif self.state is SafetyState.RUNNING:
                if pose_err >= cfg.margin * cfg.bound:
                    self.state = SafetyState.BRAKING
                    self._brake_start = self._last_output
                    self._brake_ticks = 0
            elif self.state is SafetyState.BRAKING:
                stopped = self._last_output == (0.0, 0.0)
                if stopped and pose_err >= cfg.margin * cfg.bound:
                    self._latch(LatchReason.BARRIER_EXCEEDED)
                elif (
                    not stopped
                    and pose_err < cfg.recovery_fraction * cfg.bound
                ):
                    self.state = SafetyState.RUNNING
                    self._brake_start = None
        return self.status()

    def _latch(self, reason: LatchReason) -> None:
        self.state = SafetyState.SAFE_STOP
        self.reason = reason

    def reset(self) -> None:
        """Explicit operator reset out of SafeStop."""
        self.state = SafetyState.RUNNING
        self.reason = LatchReason.NONE
        self._brake_start = None
        self._brake_ticks = 0

    def status(self) -> SafetyStatus:
        return SafetyStatus(
            state=self.state,
            pose_err=self._pose_err,
            bound=self.cfg.bound,
            reason=self.reason,
            cap_factor=self.cap_factor(),
        )

    # -- command shaping -------------------------------------------------

    def cap_factor(self) -> float:
        """Speed cap applied while Running; 0 once motion is forbidden."""
        if self.state is SafetyState.SAFE_STOP:
            return 0.0
        if self.state is SafetyState.BRAKING:
            return 0.0
        cfg = self.cfg
        start = cfg.taper_start * cfg.bound
        end = cfg.margin * cfg.bound
        if self._pose_err <= start:
            return 1.0
        frac = min((self._pose_err - start) / (end - start), 1.0)
        return 1.0 + (cfg.taper_floor - 1.0) * frac

    def shape_command(self, cmd: WheelRates, dt: float) -> WheelRates:
        """Apply capping / braking / stop rules to a raw wheel command."""
        if not (math.isfinite(cmd.right) and math.isfinite(cmd.left)):
            self._latch(LatchReason.NUMERICAL_FAULT)
        if self.state is SafetyState.SAFE_STOP:
            out = WheelRates(0.0, 0.0)
        elif self.state is SafetyState.BRAKING:
            if self._brake_start is None:
                self._brake_start = self._last_output
                self._brake_ticks = 0
            self._brake_ticks += 1
            # Closed-form ramp: no per-tick accumulation error.
            drop = self.cfg.brake_decel * dt * self._brake_ticks
            out = WheelRates(
                _ramp_down(self._brake_start.right, drop),
                _ramp_down(self._brake_start.left, drop),
            )
        else:
            cap = self.cap_factor()
            out = cmd if cap >= 1.0 else WheelRates(cap * cmd.right, cap * cmd.left)
        self._last_output = out
        return out

    def barrier_for_control(self, pose_err: float) -> float:
        """Barrier value handed to the control law; capped at the margin.

        Inside the guarded margin the raw barrier would approach the
        singularity, so the value is frozen at the margin's barrier while
        the supervisor brakes.
        """
        cfg = self.cfg
        limit = cfg.margin * cfg.bound
        if pose_err < limit:
            return log_barrier(pose_err, cfg.bound)
        return log_barrier(limit, cfg.bound)


def _ramp_down(start: float, drop: float) -> float:
    remaining = abs(start) - drop
    if remaining <= 1e-12 * max(1.0, abs(start)):
        return 0.0
    return math.copysign(remaining, start)
