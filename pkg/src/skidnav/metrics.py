"""Tracking and step-response metrics computed from telemetry, plus replay.

APE is the Euclidean position error between measured and reference poses
over the run; RPE compares measured and reference pose increments over
1 s windows. Wheel-rate step metrics (peak time, overshoot, settling
time with a 2% band, steady-state error over the final 20% of a constant
segment) are extracted per side whenever the telemetry contains a
qualifying constant-reference segment; absent data yields absent
metrics, never fabricated ones.

Replay re-reads a run directory, recomputes the metrics, checks them
byte-for-byte against the stored summary, and re-verifies the safety
invariants offline.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .telemetry import read_channel, read_summary

MIN_SEGMENT_S = 2.0
MIN_STEP = 0.02  # rad/s jump that counts as a step
SETTLE_BAND = 0.02  # fraction of the step amplitude
SSE_TAIL = 0.2  # final fraction of the segment used for steady-state error


def ape_values(pose) -> np.ndarray:
    x = np.array(pose.column("x_msr"))
    y = np.array(pose.column("y_msr"))
    xr = np.array(pose.column("x_ref"))
    yr = np.array(pose.column("y_ref"))
    return np.hypot(x - xr, y - yr)


def rpe_values(pose, delta_s: float = 1.0) -> np.ndarray:
    t = np.array(pose.column("t_s"))
    if t.size < 3:
        return np.array([])
    step = int(round(delta_s / (t[1] - t[0])))
    if step < 1 or t.size <= step:
        return np.array([])
    x = np.array(pose.column("x_msr"))
    y = np.array(pose.column("y_msr"))
    xr = np.array(pose.column("x_ref"))
    yr = np.array(pose.column("y_ref"))
    dxm = x[step:] - x[:-step]
    dym = y[step:] - y[:-step]
    dxr = xr[step:] - xr[:-step]
    dyr = yr[step:] - yr[:-step]
    return np.hypot(dxm - dxr, dym - dyr)


def constant_segments(times: np.ndarray, refs: np.ndarray, min_len_s=MIN_SEGMENT_S):
    """(start, end, value, step_from) for maximal constant-reference runs."""
    segments = []
    if times.size == 0:
        return segments
    start = 0
    for i in range(1, times.size + 1):
        if i == times.size or refs[i] != refs[start]:
            if times[i - 1] - times[start] >= min_len_s:
                prev = refs[start - 1] if start > 0 else None
                segments.append((start, i - 1, refs[start], prev))
            start = i
    return segments


def step_response_metrics(times, refs, meas, scale: float = 1.0) -> dict | None:
    """Metrics for the largest qualifying step; None when there is none.

    scale converts rate units to reported units (wheel radius for m/s).
    """
    times = np.asarray(times)
    refs = np.asarray(refs)
    meas = np.asarray(meas)
    best = None
    for start, end, value, prev in constant_segments(times, refs):
        if prev is None:
            continue
        amplitude = value - prev
        if abs(amplitude) < MIN_STEP:
            continue
        if best is None or abs(amplitude) > abs(best[3]):
            best = (start, end, value, amplitude)
    if best is None:
        return None
    start, end, value, amplitude = best
    seg_t = times[start : end + 1]
    seg_m = meas[start : end + 1]
    t0 = seg_t[0]
    if amplitude > 0:
        peak_idx = int(np.argmax(seg_m))
        overshoot = max(0.0, float(seg_m.max() - value))
    else:
        peak_idx = int(np.argmin(seg_m))
        overshoot = max(0.0, float(value - seg_m.min()))
    band = SETTLE_BAND * abs(amplitude)
    outside = np.abs(seg_m - value) > band
    if outside.any():
        last_out = int(np.where(outside)[0][-1])
        settling = (
            float(seg_t[last_out + 1] - t0)
            if last_out + 1 < seg_t.size
            else float(seg_t[-1] - t0)
        )
    else:
        settling = 0.0
    tail = seg_m[int(math.ceil(seg_m.size * (1.0 - SSE_TAIL))) :]
    sse = float(np.mean(np.abs(tail - value)))
    return {
        "peak_time_s": float(seg_t[peak_idx] - t0),
        "overshoot": overshoot * scale,
        "settling_time_s": settling,
        "steady_state_error": sse * scale,
        "step_amplitude": float(amplitude) * scale,
    }


def compute_metrics(run_dir) -> dict:
    """Deterministic metrics dict for a run directory's telemetry."""
    run_dir = Path(run_dir)
    pose = read_channel(run_dir / "pose.csv")
    out: dict = {}
    ape = ape_values(pose)
    if ape.size:
        out["ape_mean"] = float(np.mean(ape))
        out["ape_rms"] = float(np.sqrt(np.mean(ape**2)))
        out["ape_max"] = float(np.max(ape))
    rpe = rpe_values(pose)
    if rpe.size:
        out["rpe_mean"] = float(np.mean(rpe))
        out["rpe_rms"] = float(np.sqrt(np.mean(rpe**2)))
    errs = np.array(pose.column("pose_err"))
    if errs.size:
        out["pose_err_max"] = float(np.max(errs))

    low_path = run_dir / "lowlevel.csv"
    if low_path.exists():
        low = read_channel(low_path)
        scale = float(low.meta.get("wheel_radius", 1.0))
        sides = np.array(low.column("side", cast=str))
        t = np.array(low.column("t_s"))
        ref = np.array(low.column("rate_ref"))
        mea = np.array(low.column("rate_meas"))
        steps = {}
        for side in ("R", "L"):
            mask = sides == side
            if not mask.any():
                continue
            got = step_response_metrics(t[mask], ref[mask], mea[mask], scale)
            if got is not None:
                steps[side] = got
        if steps:
            out["wheel_step"] = steps
        err = np.array(low.column("rate_err"))
        if err.size:
            out["rate_err_rms"] = float(np.sqrt(np.mean(err**2)))
    return out


@dataclass
class ReplayReport:
    metrics_match: bool
    recomputed: dict
    stored: dict
    safety_violations: list[str] = field(default_factory=list)
    malformed: list[tuple[str, int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.metrics_match and not self.safety_violations and not self.malformed


def _canonical(metrics: dict) -> bytes:
    return json.dumps(metrics, sort_keys=True).encode()


def verify_safety_invariants(run_dir) -> list[str]:
    """Offline re-check of the supervisor guarantees from the logs."""
    run_dir = Path(run_dir)
    problems = []
    safety = read_channel(run_dir / "safety.csv")
    t_s = np.array(safety.column("t_s"))
    errs = np.array(safety.column("pose_err"))
    bounds = np.array(safety.column("bound"))
    states = safety.column("state", cast=str)

    violated = errs >= bounds
    t_violation = float(t_s[violated][0]) if violated.any() else None

    low = read_channel(run_dir / "lowlevel.csv")
    lt = np.array(low.column("t_s"))
    lref = np.array(low.column("rate_ref"))
    if t_violation is not None:
        after = lt > t_violation
        if np.any(np.abs(lref[after]) > 0.0):
            problems.append(
                f"motion commands logged after pose error reached the bound "
                f"at t={t_violation}"
            )
    solver_path = run_dir / "solver.csv"
    if solver_path.exists() and t_violation is not None:
        solver = read_channel(solver_path)
        st = np.array(solver.column("t_s")) if solver.rows else np.array([])
        if st.size and np.any(st > t_violation):
            problems.append("solver commands logged after the barrier violation")

    # Braking intervals: |commanded rate| must be non-increasing.
    braking: list[tuple[float, float]] = []
    current = None
    for time, state in zip(t_s, states):
        if state == "Braking" and current is None:
            current = time
        elif state != "Braking" and current is not None:
            braking.append((current, time))
            current = None
    if current is not None:
        braking.append((current, float("inf")))
    sides = np.array(low.column("side", cast=str))
    for lo, hi in braking:
        for side in ("R", "L"):
            mask = (sides == side) & (lt >= lo) & (lt < hi)
            seq = np.abs(lref[mask])
            if np.any(np.diff(seq) > 1e-12):
                problems.append(
                    f"braking command magnitude increased on side {side} "
                    f"within [{lo}, {hi})"
                )
    for name in ("pose", "lowlevel", "safety"):
        data = read_channel(run_dir / f"{name}.csv")
        for col in data.columns:
            if col in ("side", "state", "reason"):
                continue
            vals = np.array(data.column(col))
            if vals.size and not np.all(np.isfinite(vals)):
                if not (name == "safety" and col == "pose_err"):
                    problems.append(f"non-finite value in {name}.{col}")
    return problems


def replay_run(run_dir) -> ReplayReport:
    """Recompute metrics and invariants offline; compare with the summary."""
    run_dir = Path(run_dir)
    stored = read_summary(run_dir).get("metrics", {})
    recomputed = compute_metrics(run_dir)
    malformed = []
    for name in ("pose", "lowlevel", "solver", "safety"):
        path = run_dir / f"{name}.csv"
        if path.exists():
            for lineno, msg in read_channel(path).errors:
                malformed.append((name, lineno, msg))
    return ReplayReport(
        metrics_match=_canonical(stored) == _canonical(recomputed),
        recomputed=recomputed,
        stored=stored,
        safety_violations=verify_safety_invariants(run_dir),
        malformed=malformed,
    )
