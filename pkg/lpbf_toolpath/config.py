"""
Run configuration

A YAML mapping of sections read with PyYAML. Every section maps onto a
frozen dataclass whose defaults are the process constants used throughout
the toolkit (hatch 50 um, machine laser settings, DQN hyperparameters), so
experiments are re-runnable without a config file.

Precedence: command-line override > config file > built-in default.
"""

import dataclasses
import logging
import math
import os
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "LPBF_TOOLPATH_CONFIG"


@dataclass(frozen=True)
class GeometryConfig:
    hatch_mm: float = 0.05
    boundary_tol_mm: float = 1e-9
    island_size_mm: float = 5.0
    voronoi_random_seeds: int = 10

    def __post_init__(self):
        if self.hatch_mm <= 0:
            raise ConfigError("geometry.hatch_mm must be positive")
        if self.island_size_mm <= 0:
            raise ConfigError("geometry.island_size_mm must be positive")
        if self.voronoi_random_seeds < 0:
            raise ConfigError("geometry.voronoi_random_seeds must be >= 0")


@dataclass(frozen=True)
class ThermalConfig:
    # SS316L
    conductivity: float = 20.0
    density: float = 7950.0
    heat_capacity: float = 500.0
    melt_temperature: float = 1700.0
    ambient_temperature: float = 300.0
    # machine
    power_w: float = 50.0
    absorptivity: float = 0.5
    beam_diameter_um: float = 25.0
    velocity_mm_s: float = 1000.0
    # solver
    dt_s: float = 2.5e-5
    cutoff_k: float = 0.1
    probe_max_um: float = 200.0
    probe_step_um: float = 2.0
    probe_tol_um: float = 0.1
    probe_lag_steps: int = 10
    # calibration and angle study
    calibrate: bool = True
    calibration_low: float = 0.2
    # straight-scan steady depth is about 39um at A=0.8 and 44um at A=1
    calibration_high: float = 1.0
    target_depth_um: float = 45.0
    template_leg_mm: float = 1.0
    near_vertex_mm: float = 0.25
    angle_sweep: str = "80"

    def __post_init__(self):
        for name in ("conductivity", "density", "heat_capacity", "power_w",
                     "beam_diameter_um", "velocity_mm_s", "dt_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"thermal.{name} must be positive")
        if self.melt_temperature <= self.ambient_temperature:
            raise ConfigError("thermal.melt_temperature must exceed thermal.ambient_temperature")
        if not 0 < self.absorptivity <= 1:
            raise ConfigError("thermal.absorptivity must be in (0, 1]")
        if not 0 < self.calibration_low < self.calibration_high <= 1:
            raise ConfigError("thermal.calibration_low/high must satisfy 0 < low < high <= 1")

    def sweep_angles(self):
        """Extra angle-study angles (degrees) from the comma-separated sweep"""
        text = self.angle_sweep.strip()
        if not text:
            return []
        try:
            return [float(a) for a in text.split(",")]
        except ValueError:
            raise ConfigError(f"thermal.angle_sweep: cannot parse {self.angle_sweep!r}")


@dataclass(frozen=True)
class EnvConfig:
    proxy_size: int = 64
    proxy_sigma_h: float = 2.0
    proxy_tau_steps: float = 64.0
    collision_threshold: int = 3
    sensitive_coeff: float = 3.0

    def __post_init__(self):
        if self.proxy_size < 1:
            raise ConfigError("env.proxy_size must be >= 1")
        if self.proxy_sigma_h <= 0 or self.proxy_tau_steps <= 0:
            raise ConfigError("env.proxy_sigma_h and env.proxy_tau_steps must be positive")
        if self.sensitive_coeff <= 0:
            raise ConfigError("env.sensitive_coeff must be positive")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    gamma: float = 0.99
    batch_size: int = 64
    target_update: int = 80
    replay_size: int = 1000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.0
    epsilon_decay: float = 200.0
    episodes: int = 1000
    hidden_units: int = 128
    hidden_layers: int = 2
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ConfigError("learner.gamma must be in [0, 1)")
        if self.batch_size < 1 or self.batch_size > self.replay_size:
            raise ConfigError("learner.batch_size must be in [1, learner.replay_size]")
        if self.target_update < 1:
            raise ConfigError("learner.target_update must be >= 1")
        if self.epsilon_decay <= 0:
            raise ConfigError("learner.epsilon_decay must be positive")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ConfigError("learner.epsilon_end <= learner.epsilon_start must lie in [0, 1]")
        if self.episodes < 0:
            raise ConfigError("learner.episodes must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError("learner.optimizer must be 'adam' or 'sgd'")


@dataclass(frozen=True)
class PathplanConfig:
    idw_decay: float = 0.5
    gcode_threshold_h: float = math.sqrt(2.0)

    def __post_init__(self):
        if not 0 < self.idw_decay <= 1:
            raise ConfigError("pathplan.idw_decay must be in (0, 1]")
        if self.gcode_threshold_h <= 0:
            raise ConfigError("pathplan.gcode_threshold_h must be positive")


@dataclass(frozen=True)
class RunConfig:
    snapshot_every: int = 100

    def __post_init__(self):
        if self.snapshot_every < 0:
            raise ConfigError("run.snapshot_every must be >= 0")


_SECTIONS = {
    "geometry": GeometryConfig,
    "thermal": ThermalConfig,
    "env": EnvConfig,
    "learner": TrainConfig,
    "pathplan": PathplanConfig,
    "run": RunConfig,
}


@dataclass(frozen=True)
class AppConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    thermal: ThermalConfig = field(default_factory=ThermalConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    learner: TrainConfig = field(default_factory=TrainConfig)
    pathplan: PathplanConfig = field(default_factory=PathplanConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def snapshot(self):
        """Plain nested dict of every setting (for manifests and model files)"""
        return dataclasses.asdict(self)

    def with_overrides(self, overrides):
        """
        Return a copy with dotted-key overrides applied

        Args:
            overrides: Mapping like {"learner.episodes": 10}; values may be
                       strings or already-typed values. None values are ignored.
        """
        values = {name: {} for name in _SECTIONS}
        for dotted, raw in overrides.items():
            if raw is None:
                continue
            section, key = _split_key(dotted)
            values[section][key] = raw
        return _build(values, base=self)


def _split_key(dotted):
    section, _, key = dotted.partition(".")
    if section not in _SECTIONS:
        raise ConfigError(f"unknown config section [{section}] (key {dotted!r})")
    names = {f.name for f in dataclasses.fields(_SECTIONS[section])}
    if key not in names:
        raise ConfigError(f"unknown config key {section}.{key}")
    return section, key


def _coerce(section, key, kind, raw):
    if not isinstance(raw, str):
        if kind is float and isinstance(raw, int) and not isinstance(raw, bool):
            return float(raw)
        if isinstance(raw, kind) and not (isinstance(raw, bool) and kind is not bool):
            return raw
        raw = str(raw)
    text = raw.strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "yes", "true", "on"):
                return True
            if lowered in ("0", "no", "false", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {kind.__name__}")


def _build(values, base=None):
    base = base or AppConfig()
    sections = {}
    for name, cls in _SECTIONS.items():
        current = getattr(base, name)
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        updates = {key: _coerce(name, key, kinds[key], raw)
                   for key, raw in values.get(name, {}).items()}
        sections[name] = dataclasses.replace(current, **updates)
    return AppConfig(**sections)


def load_config(path=None, overrides=None):
    """
    Load configuration with precedence override > file > default

    Args:
        path: YAML file path; when None the path in $LPBF_TOOLPATH_CONFIG is
              used if set, otherwise only defaults apply
        overrides: Optional mapping of dotted keys to values (CLI flags)

    Returns:
        AppConfig
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None

    values = {name: {} for name in _SECTIONS}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ConfigError(f"malformed config file {path}: {e}")
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"malformed config file {path}: expected a mapping of sections")
        for section, entries in data.items():
            if entries is None:
                entries = {}
            if not isinstance(entries, dict):
                raise ConfigError(f"config section [{section}] must be a mapping")
            for key, raw in entries.items():
                section_name, key_name = _split_key(f"{section}.{key}")
                values[section_name][key_name] = "" if raw is None else raw
        logger.info("Loaded configuration from %s", path)

    config = _build(values)
    if overrides:
        config = config.with_overrides(overrides)
    return config
