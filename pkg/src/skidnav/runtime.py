"""Deterministic multi-rate closed-loop runtime.

A single virtual clock ticks at the low-level rate (1 kHz). The pose
channel publishes noisy samples at its own rate and is zero-order held;
the high-level NMPC runs at its rate consuming the held pose and the
fresh wheel-rate measurement; the safety supervisor monitors and shapes
every tick; the low-level controller and plant advance every tick. A run
terminates either at the configured duration or at the first SafeStop
tick; no motion command is issued at or after the latch.
"""

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, config_to_ini
from .kinematics import Pose2, WheelRates
from .lowlevel import LowLevelController, pose_error
from .metrics import compute_metrics
from .mlp import SurrogateModel, load_model
from .ocp import OcpConfig
from .plant import (
    DisturbanceGenerator,
    Plant,
    PoseSensor,
    TerrainProfile,
    TERRAINS,
    WheelRateSensor,
    default_left_side,
    default_right_side,
)
from .safety import SafetyFault, SafetyState, Supervisor
from .sqp import NmpcController, SqpSettings
from .telemetry import RunWriter
from .trajectory import (
    lemniscate_reference,
    reference_wheel_rates,
    reference_window,
)

EXIT_COMPLETED = 0
EXIT_SAFESTOP = 2


def terrain_by_name(name: str) -> TerrainProfile:
    if name == "ideal":
        return TerrainProfile(kind="ideal", base_slip=0.0)
    return TERRAINS[name]()


@dataclass
class RunResult:
    final_state: str
    exit_code: int
    max_pose_err: float
    ticks: int
    run_dir: Path
    summary: dict


def run_scenario(
    cfg: ExperimentConfig, out_dir, model: SurrogateModel | None = None
) -> RunResult:
    """Execute one scenario and write its telemetry directory."""
    run = cfg.run
    if model is None:
        if not run.model:
            raise ValueError("no surrogate model: set [run] model or pass one in")
        model = load_model(run.model)

    seeds = np.random.SeedSequence(run.seed).spawn(3)
    pose_sensor = PoseSensor(cfg.sensors, seed=seeds[0])
    wheel_sensor = WheelRateSensor(cfg.sensors, seed=seeds[1])
    disturbance = DisturbanceGenerator(cfg.disturbance, seed=seeds[2])

    terrain = terrain_by_name(run.terrain)
    start_pose, _ = lemniscate_reference(cfg.trajectory, 0.0)
    plant = Plant(
        geom=cfg.geometry,
        right=default_right_side(),
        left=default_left_side(),
        terrain=terrain,
        pose=Pose2.from_array(start_pose),
    )
    supervisor = Supervisor(cfg.safety)
    mode = "sdnn" if run.scenario == "sdnn-only" else "rsdnn"
    lowlevel = LowLevelController(
        replace(cfg.lowlevel, mode=mode), model, cfg.geometry.wheel_radius
    )
    uses_nmpc = run.scenario != "no-nmpc"
    nmpc = None
    if uses_nmpc:
        nmpc = NmpcController(
            cfg.nmpc,
            cfg.geometry,
            settings=SqpSettings(),
            realtime_iters=run.nmpc_realtime_iters,
            init_iters=run.nmpc_init_iters,
        )

    low_hz = cfg.rates.low_level_hz
    dt = 1.0 / low_hz
    pose_every = low_hz // cfg.rates.pose_hz
    high_every = low_hz // cfg.rates.high_level_hz
    n_ticks = int(round(run.duration * low_hz))

    meta = {
        "scenario": run.scenario,
        "terrain": run.terrain,
        "seed": run.seed,
        "wheel_radius": cfg.geometry.wheel_radius,
    }
    writer = RunWriter(out_dir, config_to_ini(cfg), meta)
    pose_ch = writer.channels["pose"]
    low_ch = writer.channels["lowlevel"]
    solver_ch = writer.channels["solver"]
    safety_ch = writer.channels["safety"]

    held_pose = Pose2.from_array(start_pose)
    held_err = 0.0
    cmd_raw = WheelRates(0.0, 0.0)
    max_err = 0.0
    fault_pending = False
    last_state = supervisor.state
    final_tick = 0

    for tick in range(n_ticks + 1):
        t = tick / low_hz
        final_tick = tick
        rates_true = plant.wheel_rates()
        sampled = wheel_sensor.sample(rates_true, t)
        rate_meas = rates_true if sampled is None else sampled

        if tick % pose_every == 0:
            sample = pose_sensor.sample(plant.pose, t)
            if sample is not None:
                held_pose = sample
                ref_pose, _ = lemniscate_reference(cfg.trajectory, t)
                try:
                    held_err = pose_error(
                        held_pose, ref_pose, cfg.lowlevel.yaw_weight
                    )
                except SafetyFault:
                    fault_pending = True
                    held_err = float("inf")
                max_err = max(max_err, held_err)
                pose_ch.row(
                    [
                        t,
                        held_pose.x,
                        held_pose.y,
                        held_pose.yaw,
                        plant.pose.x,
                        plant.pose.y,
                        plant.pose.yaw,
                        ref_pose[0],
                        ref_pose[1],
                        ref_pose[2],
                        held_err,
                    ]
                )

        status = supervisor.monitor(held_err, fault=fault_pending)
        fault_pending = False
        if status.state is not last_state or tick % pose_every == 0:
            safety_ch.row(
                [
                    t,
                    status.state.value,
                    status.pose_err,
                    status.bound,
                    status.reason.value,
                    status.cap_factor,
                ]
            )
        last_state = status.state
        if status.state is SafetyState.SAFE_STOP:
            break

        if uses_nmpc and tick % high_every == 0:
            try:
                ref_poses, ref_vels = reference_window(
                    cfg.trajectory, t, cfg.nmpc.dt, cfg.nmpc.horizon
                )
                cmd_raw, solve_report = nmpc.step(
                    t,
                    held_pose.as_array(),
                    np.array(rate_meas),
                    ref_poses,
                    ref_vels,
                )
                solver_ch.row(
                    [
                        t,
                        solve_report.cost,
                        solve_report.max_defect,
                        solve_report.kkt_residual,
                        solve_report.iterations,
                        cmd_raw.right,
                        cmd_raw.left,
                        solve_report.active_bounds_mask,
                    ]
                )
            except (SafetyFault, FloatingPointError):
                fault_pending = True
                cmd_raw = WheelRates(0.0, 0.0)
        elif not uses_nmpc:
            cmd_raw = reference_wheel_rates(cfg.trajectory, cfg.geometry, t)

        cmd = supervisor.shape_command(cmd_raw, dt)
        if supervisor.state is SafetyState.SAFE_STOP:
            break  # non-finite raw command latched inside shape_command

        barrier_val = supervisor.barrier_for_control(held_err)
        try:
            right_tel, left_tel = lowlevel.step(cmd, rate_meas, barrier_val, dt)
            u_right, u_left = right_tel.u_total, left_tel.u_total
        except SafetyFault:
            fault_pending = True
            continue  # supervisor latches on the next monitor call

        if tick % run.lowlevel_log_every == 0:
            for side, tel in (("R", right_tel), ("L", left_tel)):
                low_ch.row(
                    [
                        t,
                        side,
                        tel.rate_ref,
                        tel.rate_meas,
                        tel.rate_err,
                        tel.adapt_gain,
                        held_err,
                        tel.barrier,
                        tel.u_ff,
                        tel.u_total,
                    ]
                )

        if tick == n_ticks:
            break
        slips = plant.terrain.slip_at(plant.pose.x, plant.pose.y)
        d = disturbance.sample(t, dt, slips, rates_true)
        plant.step(u_right, u_left, dt, d)

    final_state = supervisor.state
    exit_code = (
        EXIT_SAFESTOP if final_state is SafetyState.SAFE_STOP else EXIT_COMPLETED
    )
    # Flush channels, then compute metrics from what was actually logged.
    writer.flush_channels()
    metrics = compute_metrics(out_dir)
    summary = {
        "scenario": run.scenario,
        "terrain": run.terrain,
        "seed": run.seed,
        "final_state": final_state.value,
        "latch_reason": supervisor.reason.value,
        "exit_code": exit_code,
        "ticks": final_tick,
        "duration_s": final_tick / low_hz,
        "max_pose_err": max_err,
        "metrics": metrics,
    }
    writer.finish(summary)
    return RunResult(
        final_state=final_state.value,
        exit_code=exit_code,
        max_pose_err=max_err,
        ticks=final_tick,
        run_dir=Path(out_dir),
        summary=summary,
    )
