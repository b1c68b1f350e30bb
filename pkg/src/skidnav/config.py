"""Experiment configuration: one dataclass tree, one INI file format.

Every module's parameters live in a section; values are written back out
exactly as parsed so a run directory's config snapshot reproduces the
run. Unknown sections or keys are rejected.
"""

import configparser
import io
import typing
from dataclasses import dataclass, field, fields, replace

from .kinematics import RobotGeometry
from .lowlevel import LowLevelConfig, SideGains
from .ocp import OcpConfig
from .plant import DisturbanceConfig, SensorConfig, TERRAINS
from .safety import SafetyConfig
from .trajectory import LemniscateConfig

SCENARIOS = ("no-nmpc", "sdnn-only", "full-rsdnn")
TERRAIN_NAMES = tuple(sorted(TERRAINS)) + ("ideal",)


@dataclass(frozen=True)
class RateSchedule:
    low_level_hz: int = 1000
    pose_hz: int = 20
    high_level_hz: int = 50

    def __post_init__(self):
        if min(self.low_level_hz, self.pose_hz, self.high_level_hz) <= 0:
            raise ValueError("all rates must be positive")
        if self.low_level_hz % self.pose_hz or self.low_level_hz % self.high_level_hz:
            raise ValueError(
                "low_level_hz must be divisible by pose_hz and high_level_hz"
            )


@dataclass(frozen=True)
class RunSettings:
    scenario: str = "full-rsdnn"
    terrain: str = "asphalt"
    seed: int = 0
    duration: float = 180.0
    model: str = ""
    lowlevel_log_every: int = 1
    nmpc_realtime_iters: int = 1
    nmpc_init_iters: int = 80

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.terrain not in TERRAIN_NAMES:
            raise ValueError(f"terrain must be one of {TERRAIN_NAMES}")
        if self.duration <= 0 or self.lowlevel_log_every < 1:
            raise ValueError("duration and lowlevel_log_every must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSettings = field(default_factory=RunSettings)
    geometry: RobotGeometry = field(
        default_factory=lambda: RobotGeometry(wheel_radius=0.8, half_track=1.1)
    )
    trajectory: LemniscateConfig = field(default_factory=LemniscateConfig)
    rates: RateSchedule = field(default_factory=RateSchedule)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    safety: SafetyConfig = field(default_factory=SafetyConfig)
    lowlevel: LowLevelConfig = field(default_factory=LowLevelConfig)
    nmpc: OcpConfig = field(default_factory=OcpConfig)
    disturbance: DisturbanceConfig = field(
        default_factory=lambda: DisturbanceConfig(
            max_torque=2.0,
            noise_std=0.2,
            noise_cutoff_hz=2.0,
            terrain_load_gain=2.0,
        )
    )


_SECTIONS = {
    "run": ("run", RunSettings),
    "geometry": ("geometry", RobotGeometry),
    "trajectory": ("trajectory", LemniscateConfig),
    "rates": ("rates", RateSchedule),
    "sensors": ("sensors", SensorConfig),
    "safety": ("safety", SafetyConfig),
    "lowlevel": ("lowlevel", LowLevelConfig),
    "lowlevel.right": None,  # handled inside lowlevel
    "lowlevel.left": None,
    "nmpc": ("nmpc", OcpConfig),
    "disturbance": ("disturbance", DisturbanceConfig),
}


def _format_value(value) -> str:
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ";".join(",".join(repr(float(x)) for x in t) for t in value)
        return ",".join(repr(float(x)) for x in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str, ftype):
    origin = typing.get_origin(ftype)
    if origin is tuple:
        args = typing.get_args(ftype)
        if args and typing.get_origin(args[0]) is tuple:
            if not text.strip():
                return ()
            return tuple(
                tuple(float(x) for x in part.split(","))
                for part in text.split(";")
            )
        return tuple(float(x) for x in text.split(","))
    if ftype is float:
        return float(text)
    if ftype is int:
        return int(text)
    if ftype is bool:
        return text.strip().lower() in ("1", "true", "yes", "on")
    if ftype is str:
        return text
    raise ValueError(f"unsupported config field type: {ftype}")


def _dataclass_to_section(obj, skip=()) -> dict[str, str]:
    out = {}
    for f in fields(obj):
        if f.name in skip:
            continue
        out[f.name] = _format_value(getattr(obj, f.name))
    return out


def _section_to_kwargs(cls, items: dict[str, str], section: str) -> dict:
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, text in items.items():
        if key not in known:
            raise ValueError(f"unknown key '{key}' in section [{section}]")
        kwargs[key] = _parse_value(text, hints[key])
    return kwargs


def config_to_ini(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["run"] = _dataclass_to_section(cfg.run)
    parser["geometry"] = _dataclass_to_section(cfg.geometry)
    parser["trajectory"] = _dataclass_to_section(cfg.trajectory)
    parser["rates"] = _dataclass_to_section(cfg.rates)
    parser["sensors"] = _dataclass_to_section(cfg.sensors)
    parser["safety"] = _dataclass_to_section(cfg.safety)
    parser["lowlevel"] = _dataclass_to_section(cfg.lowlevel, skip=("right", "left"))
    parser["lowlevel.right"] = _dataclass_to_section(cfg.lowlevel.right)
    parser["lowlevel.left"] = _dataclass_to_section(cfg.lowlevel.left)
    parser["nmpc"] = _dataclass_to_section(cfg.nmpc)
    parser["disturbance"] = _dataclass_to_section(cfg.disturbance)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_from_ini(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser.read_string(text)
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
    defaults = ExperimentConfig()

    def build(cls, section, fallback):
        if not parser.has_section(section):
            return fallback
        kwargs = _section_to_kwargs(cls, dict(parser[section]), section)
        return replace(fallback, **kwargs) if kwargs else fallback

    right = build(SideGains, "lowlevel.right", defaults.lowlevel.right)
    left = build(SideGains, "lowlevel.left", defaults.lowlevel.left)
    lowlevel = defaults.lowlevel
    if parser.has_section("lowlevel"):
        kwargs = _section_to_kwargs(
            LowLevelConfig, dict(parser["lowlevel"]), "lowlevel"
        )
        lowlevel = replace(lowlevel, **kwargs)
    lowlevel = replace(lowlevel, right=right, left=left)
    return ExperimentConfig(
        run=build(RunSettings, "run", defaults.run),
        geometry=build(RobotGeometry, "geometry", defaults.geometry),
        trajectory=build(LemniscateConfig, "trajectory", defaults.trajectory),
        rates=build(RateSchedule, "rates", defaults.rates),
        sensors=build(SensorConfig, "sensors", defaults.sensors),
        safety=build(SafetyConfig, "safety", defaults.safety),
        lowlevel=lowlevel,
        nmpc=build(OcpConfig, "nmpc", defaults.nmpc),
        disturbance=build(DisturbanceConfig, "disturbance", defaults.disturbance),
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_ini(fh.read())


def with_overrides(cfg: ExperimentConfig, **run_overrides) -> ExperimentConfig:
    """Replace [run] settings (scenario, terrain, seed, ...) functionally."""
    return replace(cfg, run=replace(cfg.run, **run_overrides))
