"""Run-directory telemetry: one channel file per data stream.

Each channel file carries a single JSON header line (channel name,
column names, run metadata) followed by plain CSV rows. Floats are
written with repr() so replays are byte-exact; a run directory also
holds the config snapshot and a summary.json with the final outcome
and metrics.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

POSE_COLUMNS = [
    "t_s",
    "x_msr",
    "y_msr",
    "yaw_msr",
    "x_true",
    "y_true",
    "yaw_true",
    "x_ref",
    "y_ref",
    "yaw_ref",
    "pose_err",
]
LOWLEVEL_COLUMNS = [
    "t_s",
    "side",
    "rate_ref",
    "rate_meas",
    "rate_err",
    "adapt_gain",
    "pose_err",
    "barrier",
    "u_ff",
    "u_total",
]
SOLVER_COLUMNS = [
    "t_s",
    "cost",
    "defect",
    "kkt_residual",
    "iterations",
    "rate_cmd_right",
    "rate_cmd_left",
    "active_bounds_mask",
]
SAFETY_COLUMNS = ["t_s", "state", "pose_err", "bound", "reason", "cap_factor"]

CHANNELS = {
    "pose": POSE_COLUMNS,
    "lowlevel": LOWLEVEL_COLUMNS,
    "solver": SOLVER_COLUMNS,
    "safety": SAFETY_COLUMNS,
}


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int) or (
        hasattr(value, "dtype") and np.issubdtype(value.dtype, np.integer)
    ):
        return str(int(value))
    return repr(float(value))


class ChannelWriter:
    """Buffered writer for one telemetry channel."""

    def __init__(self, path: Path, channel: str, columns: list[str], meta: dict):
        self.path = Path(path)
        self.columns = columns
        header = {"channel": channel, "columns": columns}
        header.update(meta)
        self._lines = [json.dumps(header)]

    def row(self, values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(
                f"expected {len(self.columns)} values, got {len(values)}"
            )
        self._lines.append(",".join(_fmt(v) for v in values))

    def flush(self) -> None:
        self.path.write_text("\n".join(self._lines) + "\n")


@dataclass
class ChannelData:
    meta: dict
    columns: list[str]
    rows: list[list[str]]
    errors: list[tuple[int, str]]

    def column(self, name: str, cast=float) -> list:
        i = self.columns.index(name)
        return [cast(row[i]) for row in self.rows]


def read_channel(path) -> ChannelData:
    """Parse a channel file; malformed rows are collected, not fatal."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise ValueError(f"empty channel file: {path}")
    try:
        meta = json.loads(text[0])
        columns = meta["columns"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ValueError(f"bad channel header in {path}: {exc}") from exc
    rows = []
    errors = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(columns):
            errors.append((lineno, f"expected {len(columns)} fields, got {len(parts)}"))
            continue
        rows.append(parts)
    return ChannelData(meta=meta, columns=columns, rows=rows, errors=errors)


class RunWriter:
    """All channels of one scenario run plus the config snapshot."""

    def __init__(self, out_dir, config_text: str, meta: dict):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "config.ini").write_text(config_text)
        self.channels = {
            name: ChannelWriter(self.out_dir / f"{name}.csv", name, cols, meta)
            for name, cols in CHANNELS.items()
        }

    def flush_channels(self) -> None:
        for writer in self.channels.values():
            writer.flush()

    def finish(self, summary: dict) -> None:
        self.flush_channels()
        (self.out_dir / "summary.json").write_text(json.dumps(summary, indent=1))


def read_summary(run_dir) -> dict:
    return json.loads((Path(run_dir) / "summary.json").read_text())


def summary_metrics_bytes(summary: dict) -> bytes:
    """Canonical byte serialization of the metrics block for comparisons."""
    return json.dumps(summary.get("metrics", {}), sort_keys=True).encode()
