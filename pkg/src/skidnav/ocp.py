"""Multiple-shooting transcription of the pose-tracking optimal control problem.

The decision vector stacks states and controls over the horizon,

    z = [x_0, u_0, x_1, u_1, ..., x_{N-1}, u_{N-1}, x_N],  len = 5N+3,

with x in R^3 (pose) and u in R^2 (per-side wheel rates). Stage 0 is
pinned to the measured state and input, consecutive states are tied by
shooting equalities x_{k+1} = int(x_k, u_k, dt), and wheel accelerations
are bounded through forward differences of consecutive controls. The
cost is quadratic: pose (and optionally pose-velocity) tracking plus
control effort, summed over interior stages with terminal weights at N.
"""

from dataclasses import dataclass, field

import numpy as np

from .kinematics import RobotGeometry, wrap_angle

N_STATE = 3
N_CTRL = 2
STRIDE = N_STATE + N_CTRL

_INF3 = (float("inf"),) * 3


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class OcpConfig:
    horizon: int = 20
    dt: float = 0.05
    q_pose: tuple[float, float, float] = (20.0, 20.0, 12.0)
    q_vel: tuple[float, float, float] = (0.0, 0.0, 0.0)
    q_pose_terminal: tuple[float, float, float] = (20.0, 20.0, 12.0)
    q_vel_terminal: tuple[float, float, float] = (0.0, 0.0, 0.0)
    r_effort: tuple[float, float] = (0.2, 0.2)
    rate_min: tuple[float, float] = (0.0, 0.0)
    rate_max: tuple[float, float] = (0.8, 0.8)
    accel_min: tuple[float, float] = (-0.2, -0.2)
    accel_max: tuple[float, float] = (0.2, 0.2)
    pose_min: tuple[float, float, float] = (-float("inf"),) * 3
    pose_max: tuple[float, float, float] = _INF3
    scheme: str = "euler"

    def __post_init__(self):
        if self.horizon < 2:
            raise ConfigurationError("horizon must be at least 2")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        for w in (
            self.q_pose,
            self.q_vel,
            self.q_pose_terminal,
            self.q_vel_terminal,
            self.r_effort,
        ):
            if any(v < 0 for v in w):
                raise ConfigurationError("cost weights must be nonnegative")
        for lo, hi in (
            (self.rate_min, self.rate_max),
            (self.accel_min, self.accel_max),
            (self.pose_min, self.pose_max),
        ):
            if any(a > b for a, b in zip(lo, hi)):
                raise ConfigurationError("lower bounds must not exceed upper bounds")
        if self.scheme not in ("euler", "rk4"):
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")


def n_vars(horizon: int) -> int:
    return 5 * horizon + 3


def state_slice(k: int) -> slice:
    return slice(STRIDE * k, STRIDE * k + N_STATE)


def control_slice(k: int) -> slice:
    return slice(STRIDE * k + N_STATE, STRIDE * (k + 1))


def pack_decision(states: np.ndarray, controls: np.ndarray) -> np.ndarray:
    horizon = controls.shape[0]
    if states.shape != (horizon + 1, N_STATE):
        raise ValueError("states must have one more row than controls")
    z = np.empty(n_vars(horizon))
    staged = z[: STRIDE * horizon].reshape(horizon, STRIDE)
    staged[:, :N_STATE] = states[:-1]
    staged[:, N_STATE:] = controls
    z[STRIDE * horizon :] = states[-1]
    return z


def unpack_decision(z: np.ndarray, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    if z.size != n_vars(horizon):
        raise ValueError("decision vector length does not match horizon")
    staged = z[: STRIDE * horizon].reshape(horizon, STRIDE)
    states = np.vstack([staged[:, :N_STATE], z[STRIDE * horizon :]])
    controls = staged[:, N_STATE:].copy()
    return states, controls


# --- Batched dynamics over the horizon ---------------------------------------


def batch_velocity(states, controls, geom: RobotGeometry):
    """Pose velocities f(x_k, u_k) for stacked stages, shape (K, 3)."""
    r = geom.wheel_radius
    v = 0.5 * r * (controls[:, 0] + controls[:, 1])
    w = 0.5 * r / geom.half_track * (controls[:, 0] - controls[:, 1])
    cy = np.cos(states[:, 2])
    sy = np.sin(states[:, 2])
    return np.column_stack([cy * v, sy * v, w])


def _velocity_jacobians(states, controls, geom: RobotGeometry):
    k = states.shape[0]
    r = geom.wheel_radius
    c = geom.half_track
    v = 0.5 * r * (controls[:, 0] + controls[:, 1])
    cy = np.cos(states[:, 2])
    sy = np.sin(states[:, 2])
    fx = np.zeros((k, N_STATE, N_STATE))
    fx[:, 0, 2] = -sy * v
    fx[:, 1, 2] = cy * v
    fu = np.zeros((k, N_STATE, N_CTRL))
    fu[:, 0, 0] = 0.5 * r * cy
    fu[:, 0, 1] = 0.5 * r * cy
    fu[:, 1, 0] = 0.5 * r * sy
    fu[:, 1, 1] = 0.5 * r * sy
    fu[:, 2, 0] = 0.5 * r / c
    fu[:, 2, 1] = -0.5 * r / c
    return fx, fu


def batch_step(states, controls, geom: RobotGeometry, dt: float, scheme: str):
    """Integrated next states (K, 3) without yaw wrapping."""
    if scheme == "euler":
        return states + dt * batch_velocity(states, controls, geom)
    k1 = batch_velocity(states, controls, geom)
    k2 = batch_velocity(states + 0.5 * dt * k1, controls, geom)
    k3 = batch_velocity(states + 0.5 * dt * k2, controls, geom)
    k4 = batch_velocity(states + dt * k3, controls, geom)
    return states + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def batch_step_jacobians(states, controls, geom: RobotGeometry, dt: float, scheme: str):
    """Per-stage Jacobians of the integrator step: A (K,3,3), B (K,3,2)."""
    k = states.shape[0]
    eye = np.broadcast_to(np.eye(N_STATE), (k, N_STATE, N_STATE))
    if scheme == "euler":
        fx, fu = _velocity_jacobians(states, controls, geom)
        return eye + dt * fx, dt * fu
    k1 = batch_velocity(states, controls, geom)
    f1x, f1u = _velocity_jacobians(states, controls, geom)
    x2 = states + 0.5 * dt * k1
    k2 = batch_velocity(x2, controls, geom)
    f2x, f2u = _velocity_jacobians(x2, controls, geom)
    k2x = f2x @ (eye + 0.5 * dt * f1x)
    k2u = f2u + f2x @ (0.5 * dt * f1u)
    x3 = states + 0.5 * dt * k2
    k3 = batch_velocity(x3, controls, geom)
    f3x, f3u = _velocity_jacobians(x3, controls, geom)
    k3x = f3x @ (eye + 0.5 * dt * k2x)
    k3u = f3u + f3x @ (0.5 * dt * k2u)
    x4 = states + dt * k3
    f4x, f4u = _velocity_jacobians(x4, controls, geom)
    k4x = f4x @ (eye + dt * k3x)
    k4u = f4u + f4x @ (dt * k3u)
    ax = eye + dt / 6.0 * (f1x + 2 * k2x + 2 * k3x + k4x)
    bu = dt / 6.0 * (f1u + 2 * k2u + 2 * k3u + k4u)
    return ax, bu


# --- Problem instance ---------------------------------------------------------


@dataclass
class NlpInstance:
    """A transcribed tracking problem, ready for the SQP solver."""

    cfg: OcpConfig
    geom: RobotGeometry
    ref_poses: np.ndarray  # (N+1, 3), yaw continuous and aligned
    ref_vels: np.ndarray  # (N+1, 3)
    pose_msr: np.ndarray  # (3,), yaw on the same branch as ref
    rates_msr: np.ndarray  # (2,)
    lb: np.ndarray = field(repr=False, default=None)
    ub: np.ndarray = field(repr=False, default=None)

    @property
    def horizon(self) -> int:
        return self.cfg.horizon

    @property
    def n(self) -> int:
        return n_vars(self.cfg.horizon)

    def __post_init__(self):
        n = self.n
        horizon = self.cfg.horizon
        self.lb = np.full(n, -np.inf)
        self.ub = np.full(n, np.inf)
        for k in range(1, horizon + 1):
            self.lb[state_slice(k)] = self.cfg.pose_min
            self.ub[state_slice(k)] = self.cfg.pose_max
        for k in range(1, horizon):
            self.lb[control_slice(k)] = self.cfg.rate_min
            self.ub[control_slice(k)] = self.cfg.rate_max
        # Stage 0 is pinned to the measurements.
        self.lb[state_slice(0)] = self.ub[state_slice(0)] = self.pose_msr
        self.lb[control_slice(0)] = self.ub[control_slice(0)] = self.rates_msr


def align_yaw_branch(ref_poses: np.ndarray, anchor_yaw: float) -> np.ndarray:
    """Shift the (continuous) reference yaw sequence onto the anchor's branch."""
    aligned = ref_poses.copy()
    first = aligned[0, 2]
    shift = (anchor_yaw + wrap_angle(first - anchor_yaw)) - first
    aligned[:, 2] += shift
    return aligned


def transcribe(
    cfg: OcpConfig,
    geom: RobotGeometry,
    ref_poses: np.ndarray,
    ref_vels: np.ndarray,
    pose_msr,
    rates_msr,
    yaw_anchor: float | None = None,
) -> NlpInstance:
    """Build the NLP instance for one solve.

    ref arrays must cover the horizon (N+1 samples). The reference yaw
    sequence is shifted as a block onto the branch of yaw_anchor (the
    measured yaw by default) so the optimizer never sees a 2*pi seam.
    """
    ref_poses = np.asarray(ref_poses, dtype=float)
    ref_vels = np.asarray(ref_vels, dtype=float)
    if ref_poses.shape[0] < cfg.horizon + 1 or ref_vels.shape[0] < cfg.horizon + 1:
        raise ConfigurationError(
            f"reference must cover the horizon: need {cfg.horizon + 1} samples, "
            f"got {ref_poses.shape[0]}"
        )
    ref_poses = ref_poses[: cfg.horizon + 1]
    ref_vels = ref_vels[: cfg.horizon + 1]
    pose = np.asarray(pose_msr, dtype=float).copy()
    rates = np.asarray(rates_msr, dtype=float).copy()
    if not (np.all(np.isfinite(pose)) and np.all(np.isfinite(rates))):
        raise ConfigurationError("measured state must be finite")
    anchor = pose[2] if yaw_anchor is None else yaw_anchor
    pose[2] = anchor + wrap_angle(pose[2] - anchor)
    aligned = align_yaw_branch(ref_poses, pose[2])
    return NlpInstance(
        cfg=cfg,
        geom=geom,
        ref_poses=aligned,
        ref_vels=ref_vels,
        pose_msr=pose,
        rates_msr=rates,
    )


# --- Cost --------------------------------------------------------------------


def _vel_weights_active(cfg: OcpConfig) -> bool:
    return any(cfg.q_vel) or any(cfg.q_vel_terminal)


def cost(nlp: NlpInstance, z: np.ndarray) -> float:
    """J = 1/2 * (sum of interior stage costs + terminal cost)."""
    cfg = nlp.cfg
    states, controls = unpack_decision(z, cfg.horizon)
    qx = np.asarray(cfg.q_pose)
    qn = np.asarray(cfg.q_pose_terminal)
    re = np.asarray(cfg.r_effort)
    interior = slice(1, cfg.horizon)
    dx = states[interior] - nlp.ref_poses[interior]
    total = np.sum(dx * dx * qx) + np.sum(controls[interior] ** 2 * re)
    dxn = states[-1] - nlp.ref_poses[-1]
    total += dxn @ (qn * dxn)
    if _vel_weights_active(cfg):
        qv = np.asarray(cfg.q_vel)
        vels = batch_velocity(states[interior], controls[interior], nlp.geom)
        dv = vels - nlp.ref_vels[interior]
        total += np.sum(dv * dv * qv)
        qvn = np.asarray(cfg.q_vel_terminal)
        # Terminal velocity evaluated with the last control held.
        vn = batch_velocity(states[-1:], controls[-1:], nlp.geom)[0]
        dvn = vn - nlp.ref_vels[-1]
        total += dvn @ (qvn * dvn)
    return 0.5 * total


def cost_gradient(nlp: NlpInstance, z: np.ndarray) -> np.ndarray:
    cfg = nlp.cfg
    horizon = cfg.horizon
    states, controls = unpack_decision(z, horizon)
    grad = np.zeros_like(z)
    qx = np.asarray(cfg.q_pose)
    qn = np.asarray(cfg.q_pose_terminal)
    re = np.asarray(cfg.r_effort)
    for k in range(1, horizon):
        grad[state_slice(k)] += qx * (states[k] - nlp.ref_poses[k])
        grad[control_slice(k)] += re * controls[k]
    grad[state_slice(horizon)] += qn * (states[horizon] - nlp.ref_poses[horizon])
    if _vel_weights_active(cfg):
        qv = np.asarray(cfg.q_vel)
        qvn = np.asarray(cfg.q_vel_terminal)
        fx, fu = _velocity_jacobians(states[1:], np.vstack([controls[1:], controls[-1:]]), nlp.geom)
        vels = batch_velocity(states[1:], np.vstack([controls[1:], controls[-1:]]), nlp.geom)
        for i, k in enumerate(range(1, horizon)):
            dv = qv * (vels[i] - nlp.ref_vels[k])
            grad[state_slice(k)] += fx[i].T @ dv
            grad[control_slice(k)] += fu[i].T @ dv
        dvn = qvn * (vels[-1] - nlp.ref_vels[horizon])
        grad[state_slice(horizon)] += fx[-1].T @ dvn
        grad[control_slice(horizon - 1)] += fu[-1].T @ dvn
    return grad


# --- Constraints ---------------------------------------------------------------


def shooting_defects(nlp: NlpInstance, z: np.ndarray) -> np.ndarray:
    """c_k = x_{k+1} - int(x_k, u_k, dt), shape (N, 3)."""
    states, controls = unpack_decision(z, nlp.cfg.horizon)
    pred = batch_step(states[:-1], controls, nlp.geom, nlp.cfg.dt, nlp.cfg.scheme)
    return states[1:] - pred


def rate_differences(nlp: NlpInstance, z: np.ndarray) -> np.ndarray:
    """Forward differences u_{k+1} - u_k, shape (N-1, 2)."""
    _, controls = unpack_decision(z, nlp.cfg.horizon)
    return np.diff(controls, axis=0)


def constraint_violations(nlp: NlpInstance, z: np.ndarray) -> dict:
    """Max violations of shooting, control box, and rate bounds at z."""
    cfg = nlp.cfg
    defects = shooting_defects(nlp, z)
    _, controls = unpack_decision(z, cfg.horizon)
    box_lo = np.asarray(cfg.rate_min) - controls[1:]
    box_hi = controls[1:] - np.asarray(cfg.rate_max)
    diffs = rate_differences(nlp, z)
    rate_lo = np.asarray(cfg.accel_min) * cfg.dt - diffs
    rate_hi = diffs - np.asarray(cfg.accel_max) * cfg.dt
    return {
        "defect": float(np.abs(defects).max()) if defects.size else 0.0,
        "box": float(max(box_lo.max(initial=0.0), box_hi.max(initial=0.0))),
        "rate": float(max(rate_lo.max(initial=0.0), rate_hi.max(initial=0.0))),
    }
