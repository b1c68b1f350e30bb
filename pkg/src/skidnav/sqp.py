"""SQP solver for the transcribed tracking NLP.

Shooting equalities and wheel-acceleration inequalities are handled by an
augmented Lagrangian; box bounds (including the stage-0 measurement pins,
encoded as equal bounds) by projection with an active-set reduction of the
Gauss-Newton system. Each iteration linearizes the stacked residuals

    [cost rows | sqrt(rho)(c + lam/rho) | sqrt(rho) max(0, g + nu/rho)]

and takes a projected, Armijo-backtracked Gauss-Newton step; when the
projected gradient stalls relative to the constraint violation, the
multipliers are updated and the penalty grows if feasibility lags. A
single-iteration budget gives the real-time stepping mode; the warm
start shifts the previous solution by one stage when the solve period
matches the grid.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .kinematics import WheelRates
from .ocp import (
    NlpInstance,
    _velocity_jacobians,
    batch_step,
    batch_step_jacobians,
    batch_velocity,
    control_slice,
    cost,
    n_vars,
    pack_decision,
    state_slice,
    unpack_decision,
)

N_STATE = 3
N_CTRL = 2


@dataclass(frozen=True)
class SqpSettings:
    rho0: float = 100.0
    rho_max: float = 1e8
    rho_growth: float = 10.0
    feas_decrease: float = 0.25
    update_ratio: float = 1.0
    kkt_tol: float = 1e-8
    feas_tol: float = 1e-10
    armijo: float = 1e-4
    max_linesearch: int = 30
    reg: float = 1e-9
    bound_tol: float = 1e-11


@dataclass
class SolverState:
    z: np.ndarray
    lam: np.ndarray  # (N, 3) shooting multipliers
    nu_lo: np.ndarray  # (N-1, 2) rate lower-bound multipliers
    nu_hi: np.ndarray  # (N-1, 2)
    rho: float
    last_feas: float = float("inf")


@dataclass
class SolveReport:
    iterations: int
    cost: float
    max_defect: float
    max_bound_violation: float
    kkt_residual: float
    wall_time: float
    converged: bool
    status: str
    active_bounds_mask: int = 0


def cold_start(nlp: NlpInstance) -> SolverState:
    """Initialize from the reference trajectory and its inverse kinematics."""
    cfg = nlp.cfg
    states = nlp.ref_poses.copy()
    states[0] = nlp.pose_msr
    speeds = np.hypot(nlp.ref_vels[:-1, 0], nlp.ref_vels[:-1, 1])
    omegas = nlp.ref_vels[:-1, 2]
    r = nlp.geom.wheel_radius
    c = nlp.geom.half_track
    controls = np.column_stack([(speeds + c * omegas) / r, (speeds - c * omegas) / r])
    controls = np.clip(controls, cfg.rate_min, cfg.rate_max)
    controls[0] = nlp.rates_msr
    z = pack_decision(states, controls)
    horizon = cfg.horizon
    return SolverState(
        z=z,
        lam=np.zeros((horizon, N_STATE)),
        nu_lo=np.zeros((horizon - 1, N_CTRL)),
        nu_hi=np.zeros((horizon - 1, N_CTRL)),
        rho=SqpSettings().rho0,
    )


def shift_warm_start(state: SolverState, nlp: NlpInstance) -> SolverState:
    """Advance the stored solution by one grid stage (receding horizon)."""
    cfg = nlp.cfg
    states, controls = unpack_decision(state.z, cfg.horizon)
    states[:-1] = states[1:]
    states[-1] = batch_step(
        states[-1:], controls[-1:], nlp.geom, cfg.dt, cfg.scheme
    )[0]
    controls[:-1] = controls[1:]
    lam = np.vstack([state.lam[1:], state.lam[-1:]])
    nu_lo = np.vstack([state.nu_lo[1:], state.nu_lo[-1:]])
    nu_hi = np.vstack([state.nu_hi[1:], state.nu_hi[-1:]])
    return SolverState(
        z=pack_decision(states, controls),
        lam=lam,
        nu_lo=nu_lo,
        nu_hi=nu_hi,
        rho=state.rho,
        last_feas=state.last_feas,
    )


class _Workspace:
    """Precomputed index structure for residual/Jacobian assembly."""

    def __init__(self, nlp: NlpInstance):
        cfg = nlp.cfg
        horizon = cfg.horizon
        n = n_vars(horizon)
        idx, wgt, tgt = [], [], []
        qx = cfg.q_pose
        qn = cfg.q_pose_terminal
        re = cfg.r_effort
        for k in range(1, horizon):
            base = state_slice(k).start
            for i in range(N_STATE):
                if qx[i] > 0.0:
                    idx.append(base + i)
                    wgt.append(math.sqrt(qx[i]))
                    tgt.append(nlp.ref_poses[k, i])
            cbase = control_slice(k).start
            for i in range(N_CTRL):
                if re[i] > 0.0:
                    idx.append(cbase + i)
                    wgt.append(math.sqrt(re[i]))
                    tgt.append(0.0)
        base = state_slice(horizon).start
        for i in range(N_STATE):
            if qn[i] > 0.0:
                idx.append(base + i)
                wgt.append(math.sqrt(qn[i]))
                tgt.append(nlp.ref_poses[horizon, i])
        self.lin_idx = np.asarray(idx, dtype=int)
        self.lin_w = np.asarray(wgt)
        self.lin_t = np.asarray(tgt)
        self.n = n
        self.horizon = horizon
        self.use_vel = any(cfg.q_vel) or any(cfg.q_vel_terminal)
        # Variable index blocks per stage.
        self.xs = np.array([state_slice(k).start for k in range(horizon + 1)])
        self.us = np.array([control_slice(k).start for k in range(horizon)])


def _assemble(nlp, ws, z, lam, nu_lo, nu_hi, rho, with_jac):
    """AL residual vector, optional Jacobian, and diagnostics at z."""
    cfg = nlp.cfg
    horizon = ws.horizon
    states, controls = unpack_decision(z, horizon)

    r_lin = ws.lin_w * (z[ws.lin_idx] - ws.lin_t)
    tracking_cost = 0.5 * float(r_lin @ r_lin)

    vel_rows = []
    vel_jx = vel_ju = None
    if ws.use_vel:
        qv = np.asarray(cfg.q_vel, dtype=float)
        qvn = np.asarray(cfg.q_vel_terminal, dtype=float)
        ext_states = states[1:]
        ext_controls = np.vstack([controls[1:], controls[-1:]])
        vels = batch_velocity(ext_states, ext_controls, nlp.geom)
        wv = np.vstack([np.tile(np.sqrt(qv), (horizon - 1, 1)), np.sqrt(qvn)])
        refs = nlp.ref_vels[1:]
        vel_rows = (wv * (vels - refs)).ravel()
        tracking_cost += 0.5 * float(vel_rows @ vel_rows)
        if with_jac:
            vel_jx, vel_ju = _velocity_jacobians(ext_states, ext_controls, nlp.geom)
            vel_w = wv

    pred = batch_step(states[:-1], controls, nlp.geom, cfg.dt, cfg.scheme)
    c = states[1:] - pred  # (N, 3)
    sr = math.sqrt(rho)
    r_eq = sr * (c + lam / rho)

    diffs = np.diff(controls, axis=0)  # (N-1, 2)
    g_lo = np.asarray(cfg.accel_min) * cfg.dt - diffs
    g_hi = diffs - np.asarray(cfg.accel_max) * cfg.dt
    s_lo = np.maximum(0.0, g_lo + nu_lo / rho)
    s_hi = np.maximum(0.0, g_hi + nu_hi / rho)
    r_lo = sr * s_lo
    r_hi = sr * s_hi

    phi = (
        tracking_cost
        + 0.5 * float(np.sum(r_eq * r_eq))
        + 0.5 * float(np.sum(r_lo * r_lo))
        + 0.5 * float(np.sum(r_hi * r_hi))
    )
    diag = {
        "phi": phi,
        "cost": tracking_cost,
        "defect": c,
        "g_lo": g_lo,
        "g_hi": g_hi,
        "feas": max(
            float(np.abs(c).max(initial=0.0)),
            float(np.maximum(g_lo, 0.0).max(initial=0.0)),
            float(np.maximum(g_hi, 0.0).max(initial=0.0)),
        ),
    }
    if not with_jac:
        return None, None, diag

    n_lin = r_lin.size
    n_vel = len(vel_rows) if ws.use_vel else 0
    n_eq = 3 * horizon
    n_in = 2 * (horizon - 1)
    m = n_lin + n_vel + n_eq + 2 * n_in
    r = np.empty(m)
    jac = np.zeros((m, ws.n))
    r[:n_lin] = r_lin
    jac[np.arange(n_lin), ws.lin_idx] = ws.lin_w
    off = n_lin
    if ws.use_vel:
        r[off : off + n_vel] = vel_rows
        for i in range(horizon):
            k = i + 1  # stage of the state
            rows = slice(off + 3 * i, off + 3 * i + 3)
            jac[rows, ws.xs[k] : ws.xs[k] + 3] = vel_w[i][:, None] * vel_jx[i]
            uk = min(k, horizon - 1)  # terminal row reuses the last control
            jac[rows, ws.us[uk] : ws.us[uk] + 2] = vel_w[i][:, None] * vel_ju[i]
        off += n_vel

    ax, bu = batch_step_jacobians(states[:-1], controls, nlp.geom, cfg.dt, cfg.scheme)
    r[off : off + n_eq] = r_eq.ravel()
    for k in range(horizon):
        rows = slice(off + 3 * k, off + 3 * k + 3)
        jac[rows, ws.xs[k] : ws.xs[k] + 3] = -sr * ax[k]
        jac[rows, ws.us[k] : ws.us[k] + 2] = -sr * bu[k]
        jac[rows, ws.xs[k + 1] : ws.xs[k + 1] + 3] = sr * np.eye(3)
    off += n_eq

    act_lo = (s_lo > 0.0).ravel()
    act_hi = (s_hi > 0.0).ravel()
    r[off : off + n_in] = r_lo.ravel()
    r[off + n_in : off + 2 * n_in] = r_hi.ravel()
    for k in range(horizon - 1):
        for i in range(N_CTRL):
            j = 2 * k + i
            if act_lo[j]:
                jac[off + j, ws.us[k] + i] = sr
                jac[off + j, ws.us[k + 1] + i] = -sr
            if act_hi[j]:
                jac[off + n_in + j, ws.us[k] + i] = -sr
                jac[off + n_in + j, ws.us[k + 1] + i] = sr
    return r, jac, diag


def _projected_gradient_norm(z, grad, lb, ub) -> float:
    return float(np.abs(z - np.clip(z - grad, lb, ub)).max())


def _polish_controls(nlp: NlpInstance, z: np.ndarray) -> np.ndarray:
    """Forward-chain clip of the controls onto box + rate feasibility."""
    cfg = nlp.cfg
    states, controls = unpack_decision(z, cfg.horizon)
    lo_box = np.asarray(cfg.rate_min)
    hi_box = np.asarray(cfg.rate_max)
    d_lo = np.asarray(cfg.accel_min) * cfg.dt
    d_hi = np.asarray(cfg.accel_max) * cfg.dt
    for k in range(1, cfg.horizon):
        lo = np.maximum(lo_box, controls[k - 1] + d_lo)
        hi = np.minimum(hi_box, controls[k - 1] + d_hi)
        hi = np.maximum(hi, lo)  # degenerate only if the anchor is out of box
        controls[k] = np.clip(controls[k], lo, hi)
    return pack_decision(states, controls)


def solve(
    nlp: NlpInstance,
    budget: int,
    state: SolverState | None = None,
    settings: SqpSettings = SqpSettings(),
) -> tuple[WheelRates, SolveReport, SolverState]:
    """Run up to `budget` SQP iterations; returns the first free control.

    Exhausting the budget is not an error: the best iterate is returned
    flagged "realtime-partial" per the single-iteration stepping mode.
    """
    t0 = time.perf_counter()
    if budget < 1:
        raise ValueError("budget must be at least one iteration")
    if state is None:
        state = cold_start(nlp)
        state.rho = settings.rho0
    ws = _Workspace(nlp)
    z = np.clip(state.z, nlp.lb, nlp.ub)
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite warm start handed to the solver")
    lam = state.lam.copy()
    nu_lo = state.nu_lo.copy()
    nu_hi = state.nu_hi.copy()
    rho = state.rho
    last_feas = state.last_feas

    status = "realtime-partial"
    converged = False
    iterations = 0
    pinned = nlp.lb == nlp.ub

    for _ in range(budget):
        iterations += 1
        r, jac, diag = _assemble(nlp, ws, z, lam, nu_lo, nu_hi, rho, True)
        if not np.all(np.isfinite(r)):
            raise FloatingPointError("non-finite model evaluation in solver")
        grad = jac.T @ r
        station = _projected_gradient_norm(z, grad, nlp.lb, nlp.ub)
        feas = diag["feas"]
        if feas <= settings.feas_tol and station <= settings.kkt_tol:
            status = "converged"
            converged = True
            break
        if station <= max(settings.kkt_tol, settings.update_ratio * feas):
            # Inner problem solved to tolerance: update the multipliers.
            lam = lam + rho * diag["defect"]
            nu_lo = np.maximum(0.0, nu_lo + rho * diag["g_lo"])
            nu_hi = np.maximum(0.0, nu_hi + rho * diag["g_hi"])
            if feas > settings.feas_decrease * last_feas:
                rho = min(rho * settings.rho_growth, settings.rho_max)
            last_feas = feas
            continue

        free = ~(
            pinned
            | ((z <= nlp.lb + settings.bound_tol) & (grad > 0.0))
            | ((z >= nlp.ub - settings.bound_tol) & (grad < 0.0))
        )
        step = np.zeros_like(z)
        if np.any(free):
            jf = jac[:, free]
            h = jf.T @ jf
            h[np.diag_indices_from(h)] += settings.reg * (1.0 + np.abs(np.diag(h)))
            try:
                chol = np.linalg.cholesky(h)
                step[free] = -np.linalg.solve(
                    chol.T, np.linalg.solve(chol, grad[free])
                )
            except np.linalg.LinAlgError:
                step[free] = -grad[free] / max(1.0, float(np.abs(np.diag(h)).max()))

        alpha = 1.0
        improved = False
        phi0 = diag["phi"]
        for _ls in range(settings.max_linesearch):
            z_try = np.clip(z + alpha * step, nlp.lb, nlp.ub)
            move = z_try - z
            pred = float(grad @ move)
            _, _, diag_try = _assemble(
                nlp, ws, z_try, lam, nu_lo, nu_hi, rho, False
            )
            if diag_try["phi"] <= phi0 + settings.armijo * pred:
                z = z_try
                improved = True
                break
            alpha *= 0.5
        if not improved:
            # Gauss-Newton direction rejected; fall back to projected gradient.
            scale = max(1.0, float(np.abs(grad).max()))
            alpha = 1.0 / scale
            for _ls in range(settings.max_linesearch):
                z_try = np.clip(z - alpha * grad, nlp.lb, nlp.ub)
                _, _, diag_try = _assemble(
                    nlp, ws, z_try, lam, nu_lo, nu_hi, rho, False
                )
                if diag_try["phi"] < phi0:
                    z = z_try
                    improved = True
                    break
                alpha *= 0.5
            if not improved:
                status = "stalled" if not converged else status
                break

    # The emitted solution is feasibility-polished; the solver's own
    # iterate is kept raw for the next warm start so progress is not
    # rolled back tick to tick.
    z_out = _polish_controls(nlp, z)
    if converged and np.array_equal(z_out, z):
        # The loop's last assembly already evaluated this exact point.
        kkt = station
    else:
        r, jac, diag = _assemble(nlp, ws, z_out, lam, nu_lo, nu_hi, rho, True)
        grad = jac.T @ r
        kkt = _projected_gradient_norm(z_out, grad, nlp.lb, nlp.ub)
    states, controls = unpack_decision(z_out, nlp.cfg.horizon)
    box_lo = np.asarray(nlp.cfg.rate_min) - controls[1:]
    box_hi = controls[1:] - np.asarray(nlp.cfg.rate_max)
    bound_violation = max(
        float(np.maximum(box_lo, 0.0).max(initial=0.0)),
        float(np.maximum(box_hi, 0.0).max(initial=0.0)),
        float(np.maximum(diag["g_lo"], 0.0).max(initial=0.0)),
        float(np.maximum(diag["g_hi"], 0.0).max(initial=0.0)),
    )
    mask = 0
    tol = 1e-9
    for k in range(1, min(nlp.cfg.horizon, 31)):
        at_bound = np.any(
            (controls[k] <= np.asarray(nlp.cfg.rate_min) + tol)
            | (controls[k] >= np.asarray(nlp.cfg.rate_max) - tol)
        )
        if at_bound:
            mask |= 1 << (k - 1)

    report = SolveReport(
        iterations=iterations,
        cost=cost(nlp, z_out),
        max_defect=float(np.abs(diag["defect"]).max(initial=0.0)),
        max_bound_violation=bound_violation,
        kkt_residual=kkt,
        wall_time=time.perf_counter() - t0,
        converged=converged,
        status=status,
        active_bounds_mask=mask,
    )
    new_state = SolverState(
        z=z, lam=lam, nu_lo=nu_lo, nu_hi=nu_hi, rho=rho, last_feas=last_feas
    )
    cmd = WheelRates(float(controls[1, 0]), float(controls[1, 1]))
    return cmd, report, new_state


class NmpcController:
    """Receding-horizon wrapper: transcribe, solve, manage the warm start.

    The first call runs a high-accuracy initialization phase; subsequent
    calls use the real-time iteration budget. The stored solution is
    shifted one stage when the time since the previous solve matches the
    grid step, otherwise it is reused unshifted (the reference window is
    re-sampled from the current time either way).
    """

    def __init__(
        self,
        cfg,
        geom,
        settings: SqpSettings = SqpSettings(),
        realtime_iters: int = 1,
        init_iters: int = 80,
    ):
        from .ocp import transcribe

        self._transcribe = transcribe
        self.cfg = cfg
        self.geom = geom
        self.settings = settings
        self.realtime_iters = realtime_iters
        self.init_iters = init_iters
        self._state: SolverState | None = None
        self._last_t: float | None = None
        self._yaw_anchor: float | None = None

    def reset(self) -> None:
        self._state = None
        self._last_t = None
        self._yaw_anchor = None

    def step(
        self, t: float, pose_msr, rates_msr, ref_poses, ref_vels
    ) -> tuple[WheelRates, SolveReport]:
        """One closed-loop control update from the measured state."""
        nlp = self._transcribe(
            self.cfg,
            self.geom,
            ref_poses,
            ref_vels,
            np.asarray(pose_msr, dtype=float),
            np.asarray(rates_msr, dtype=float),
            yaw_anchor=self._yaw_anchor,
        )
        if self._state is None:
            budget = self.init_iters
            warm = None
        else:
            budget = self.realtime_iters
            warm = self._state
            if (
                self._last_t is not None
                and abs((t - self._last_t) - self.cfg.dt) < 1e-9
            ):
                warm = shift_warm_start(warm, nlp)
        cmd, report, self._state = solve(nlp, budget, warm, self.settings)
        self._last_t = t
        self._yaw_anchor = float(nlp.pose_msr[2])
        return cmd, report
