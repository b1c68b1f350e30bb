"""Data collection and preparation for the actuation surrogate.

A slow bidirectional ramp of the actuator signal sweeps the plant
through its steady operating range while wheel speeds are logged. The
surrogate is trained on the inverse steady map: inputs are the measured
per-side velocities v = r * rate, targets the applied actuator signal,
so the trained network predicts the signal that realizes a commanded
velocity.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinematics import WheelRates
from .lm import LmConfig, TrainReport, train
from .mlp import AffineNorm, SideModel, init_params
from .plant import ActuationParams, ActuationState, SensorConfig, step_actuation

DEFAULT_ARCH = [1, 35, 20, 12, 10, 8, 1]
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass
class Dataset:
    """Raw samples plus the train/val/test split and fitted norms."""

    inputs: np.ndarray  # physical inputs (per-side velocity, m/s)
    targets: np.ndarray  # physical targets (actuator signal, RPM)
    times: np.ndarray
    side: str
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    input_norm: AffineNorm
    output_norm: AffineNorm

    @property
    def size(self) -> int:
        return self.inputs.size

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        return self.input_norm.encode(self.inputs), self.output_norm.encode(
            self.targets
        )


def split_counts(n: int, fractions=SPLIT_FRACTIONS) -> tuple[int, int, int]:
    n_train = round(fractions[0] * n)
    n_val = round(fractions[1] * n)
    return n_train, n_val, n - n_train - n_val


def build_dataset(
    inputs,
    targets,
    times=None,
    side: str = "R",
    seed: int = 0,
    fractions=SPLIT_FRACTIONS,
) -> Dataset:
    """Shuffle-split the samples and fit [-1, 1] norms on the train split."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if times is None:
        times = np.arange(inputs.size, dtype=float)
    n = inputs.size
    if n < 10:
        raise ValueError("dataset too small to split")
    n_train, n_val, _ = split_counts(n, fractions)
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train : n_train + n_val])
    test_idx = np.sort(perm[n_train + n_val :])
    return Dataset(
        inputs=inputs,
        targets=targets,
        times=np.asarray(times, dtype=float),
        side=side,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
        input_norm=AffineNorm.from_data(inputs[train_idx]),
        output_norm=AffineNorm.from_data(targets[train_idx]),
    )


def median_despike(values: np.ndarray, taps: int = 5) -> np.ndarray:
    """Sliding-median filter with edge padding (odd tap count)."""
    if taps % 2 != 1 or taps < 1:
        raise ValueError("taps must be odd and positive")
    if taps == 1 or values.size <= taps:
        return values.copy()
    half = taps // 2
    padded = np.pad(values, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, taps)
    return np.median(windows, axis=1)


# --- Ramp collection --------------------------------------------------------


@dataclass(frozen=True)
class RampProtocol:
    """Slow triangular sweep 0 -> +peak -> 0 -> -peak -> 0."""

    u_peak: float = 1900.0
    duration: float = 200.0
    settle: float = 2.0
    log_hz: float = 50.0
    sim_dt: float = 1e-3
    despike_taps: int = 5


def ramp_signal(proto: RampProtocol, t: float) -> float:
    if t < proto.settle:
        return 0.0
    phase = (t - proto.settle) / proto.duration
    if phase >= 1.0:
        return 0.0
    q, frac = divmod(phase * 4.0, 1.0)
    if q == 0:
        return proto.u_peak * frac
    if q == 1:
        return proto.u_peak * (1.0 - frac)
    if q == 2:
        return -proto.u_peak * frac
    return -proto.u_peak * (1.0 - frac)


def collect_ramp_dataset(
    params: ActuationParams,
    wheel_radius: float,
    proto: RampProtocol,
    side: str,
    seed: int = 0,
    wheel_noise_std: float = 0.0,
) -> Dataset:
    """Drive one side through the ramp protocol and log (v, u) pairs."""
    rng = np.random.default_rng(seed)
    state = ActuationState(0.0, 0.0)
    dt = proto.sim_dt
    n_ticks = int(round((proto.settle + proto.duration) / dt))
    log_every = int(round(1.0 / (proto.log_hz * dt)))
    times, u_log, v_log = [], [], []
    for k in range(n_ticks + 1):
        t = k * dt
        u = ramp_signal(proto, t)
        if k % log_every == 0:
            rate = state.rate
            if wheel_noise_std > 0.0:
                rate += rng.normal(0.0, wheel_noise_std)
            times.append(t)
            u_log.append(u)
            v_log.append(wheel_radius * rate)
        state = step_actuation(state, params, u, dt)
    v = median_despike(np.asarray(v_log), proto.despike_taps)
    return build_dataset(
        v, np.asarray(u_log), times=np.asarray(times), side=side, seed=seed
    )


# --- Dataset file interface --------------------------------------------------

DATASET_COLUMNS = ["t_s", "side", "u_cmd", "wheel_rate_meas"]


def write_dataset_csv(path, datasets: list[Dataset], wheel_radius: float) -> None:
    """Rows of (t_s, side, u_cmd, wheel_rate_meas); rates back out of v."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_COLUMNS)
        for ds in datasets:
            for t, u, v in zip(ds.times, ds.targets, ds.inputs):
                writer.writerow(
                    [repr(float(t)), ds.side, repr(float(u)), repr(float(v) / wheel_radius)]
                )


def read_dataset_csv(path, wheel_radius: float, seed: int = 0) -> dict[str, Dataset]:
    by_side: dict[str, list] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != DATASET_COLUMNS:
            raise ValueError(f"unexpected dataset header: {header}")
        for row in reader:
            t, side, u, rate = float(row[0]), row[1], float(row[2]), float(row[3])
            by_side.setdefault(side, []).append((t, u, rate * wheel_radius))
    out = {}
    for side, rows in by_side.items():
        arr = np.array(rows)
        out[side] = build_dataset(
            arr[:, 2], arr[:, 1], times=arr[:, 0], side=side, seed=seed
        )
    return out


# --- Training pipeline -------------------------------------------------------


def train_surrogate(
    right: ActuationParams,
    left: ActuationParams,
    wheel_radius: float,
    proto: RampProtocol | None = None,
    layer_sizes=None,
    cfg: LmConfig | None = None,
    seed: int = 0,
    wheel_noise_std: float = 1e-3,
):
    """Collect ramp data and train both sides; returns (model, reports, datasets)."""
    from .mlp import SurrogateModel

    proto = proto or RampProtocol()
    sides = {}
    reports = {}
    datasets = {}
    for name, params, sub in (("R", right, 0), ("L", left, 1)):
        ds = collect_ramp_dataset(
            params,
            wheel_radius,
            proto,
            name,
            seed=seed + sub,
            wheel_noise_std=wheel_noise_std,
        )
        model, report = train_side_model(ds, layer_sizes, cfg, seed=seed + 10 + sub)
        sides[name] = model
        reports[name] = report
        datasets[name] = ds
    return SurrogateModel(sides), reports, datasets


def train_side_model(
    dataset: Dataset,
    layer_sizes=None,
    cfg: LmConfig | None = None,
    seed: int = 0,
) -> tuple[SideModel, TrainReport]:
    """LM-train one side on the normalized dataset; returns model + report."""
    layer_sizes = list(layer_sizes or DEFAULT_ARCH)
    cfg = cfg or LmConfig()
    x_norm, t_norm = dataset.normalized()
    init = init_params(layer_sizes, np.random.default_rng(seed))
    params, report = train(
        x_norm,
        t_norm,
        (dataset.train_idx, dataset.val_idx, dataset.test_idx),
        layer_sizes,
        cfg,
        init,
    )
    model = SideModel(params, dataset.input_norm, dataset.output_norm)
    return model, report
