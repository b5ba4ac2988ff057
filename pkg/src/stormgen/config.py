"""Run configuration: nested key-value sections with INI persistence.

Defaults are the operating point used throughout: q = 0.95, one-hour fine
episodes (12 five-minute steps) with 1200 m separation, daily gridded
episodes with 5 km separation, a two-hour advection matching pad, a
5.6 km/h empirical-speed bound and a 150 km/h transformed-speed cap.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class PathsConfig:
    gauge_csv: str = ""
    sites_csv: str = ""
    grid_csv: str = ""
    grid_binary: str = ""


@dataclass
class UnitsConfig:
    gauge_step_seconds: float = 300.0
    grid_step_seconds: float = 3600.0


@dataclass
class EpisodesConfig:
    q: float = 0.95
    delta: int = 12
    d_min: float = 1200.0
    max_episodes: int = 0            # 0 = unlimited
    quantile_positive_only: bool = True


@dataclass
class GridEpisodesConfig:
    delta: int = 24
    d_min: float = 5000.0


@dataclass
class CensoringConfig:
    precision: float = 0.2153
    multiplier: int = 1
    select_multiplier: bool = False
    pool: bool = True
    min_positive: int = 50


@dataclass
class LagsConfig:
    n_spatial_bins: int = 10
    max_temporal_lag: int = -1       # -1 = delta - 1
    max_distance: float = 0.0        # 0 = unbounded
    exact: str = "auto"              # auto | yes | no


@dataclass
class AdvectionConfig:
    pad_hours: float = 2.0
    max_emp_speed_kmh: float = 5.6
    transformed_cap_kmh: float = 150.0


@dataclass
class OptimizerConfig:
    method: str = "simplex"          # simplex | quasi-newton
    maxiter: int = 4000
    jackknife: bool = False
    eta1_fixed: float = float("nan")   # NaN = estimate
    eta2_fixed: float = float("nan")


@dataclass
class SimulationConfig:
    n_episodes: int = 1
    n_replicates: int = 1
    grid_nx: int = 20
    grid_ny: int = 20
    pixel_m: float = 100.0
    x0: float = 0.0
    y0: float = 0.0
    n_steps: int = 12
    conditioning_pixel: int = -1     # -1 = uniform random per episode
    velocity_kmh: str = ""           # "" = resample catalog; else "vx,vy"
    discretization_correction: bool = False
    write_binary: bool = False


@dataclass
class DiagnoseConfig:
    n_sim_replicates: int = 20       # conditional simulations per observed episode
    max_temporal_lag_profile: int = 12
    quantile_grid: str = "0.9,0.95,0.98"


@dataclass
class RecoveryConfig:
    beta1: float = 0.3
    beta2: float = 0.6
    alpha1: float = 0.3
    alpha2: float = 0.8
    eta1: float = 1.6
    eta2: float = 5.2
    eta_fixed: bool = False
    n_runs: int = 10
    n_episodes: int = 200
    grid_side: int = 7
    n_steps: int = 24
    speed_min: float = 0.5
    speed_max: float = 1.5
    maxiter: int = 4000


@dataclass
class SeedsConfig:
    master: int = 20240901


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    units: UnitsConfig = field(default_factory=UnitsConfig)
    episodes: EpisodesConfig = field(default_factory=EpisodesConfig)
    grid_episodes: GridEpisodesConfig = field(default_factory=GridEpisodesConfig)
    censoring: CensoringConfig = field(default_factory=CensoringConfig)
    lags: LagsConfig = field(default_factory=LagsConfig)
    advection: AdvectionConfig = field(default_factory=AdvectionConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    diagnose: DiagnoseConfig = field(default_factory=DiagnoseConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    seeds: SeedsConfig = field(default_factory=SeedsConfig)

    def validate(self):
        if not 0 < self.episodes.q < 1:
            raise ConfigError(f"episodes.q must lie in (0, 1), got {self.episodes.q}")
        for name, val in (("units.gauge_step_seconds", self.units.gauge_step_seconds),
                          ("units.grid_step_seconds", self.units.grid_step_seconds),
                          ("simulation.pixel_m", self.simulation.pixel_m)):
            if not val > 0:
                raise ConfigError(f"{name} must be positive, got {val}")
        if self.episodes.delta < 1 or self.grid_episodes.delta < 1:
            raise ConfigError("episode durations must be >= 1 step")
        return self


def _coerce(raw: str, target):
    kind = type(target)
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {kind.__name__}") from None


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path) -> PipelineConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = PipelineConfig()
    for f in fields(cfg):
        section = getattr(cfg, f.name)
        if parser.has_section(f.name):
            for key, raw in parser.items(f.name):
                if not hasattr(section, key):
                    raise ConfigError(f"unknown key [{f.name}] {key}")
                setattr(section, key, _coerce(raw, getattr(section, key)))
    return cfg.validate()


def save_config(cfg: PipelineConfig, path):
    parser = configparser.ConfigParser()
    for f in fields(cfg):
        section = getattr(cfg, f.name)
        parser[f.name] = {k: _format(v) for k, v in asdict(section).items()}
    with open(path, "w") as fh:
        parser.write(fh)


def apply_overrides(cfg: PipelineConfig, pairs) -> PipelineConfig:
    """Apply ``section.key=value`` override strings (CLI --set)."""
    for pair in pairs:
        try:
            dotted, raw = pair.split("=", 1)
            sec_name, key = dotted.strip().split(".", 1)
        except ValueError:
            raise ConfigError(f"override must look like section.key=value, got {pair!r}") from None
        if not hasattr(cfg, sec_name):
            raise ConfigError(f"unknown config section {sec_name!r}")
        section = getattr(cfg, sec_name)
        if not hasattr(section, key):
            raise ConfigError(f"unknown key [{sec_name}] {key}")
        setattr(section, key, _coerce(raw.strip(), getattr(section, key)))
    return cfg.validate()


def kmh_to_m_per_step(v_kmh: float, step_seconds: float) -> float:
    return v_kmh * 1000.0 / 3600.0 * step_seconds


def m_per_step_to_kmh(v: float, step_seconds: float) -> float:
    return v * 3600.0 / (1000.0 * step_seconds)


def theta_in_units(beta1, beta2, alpha1, alpha2, space_scale_m: float,
                   time_scale_steps: float):
    """Re-express variogram parameters with space/time measured in other units.

    ``space_scale_m`` meters per new space unit (1000 for km) and
    ``time_scale_steps`` steps per new time unit; the betas pick up the
    scale to the power of their exponent, the exponents are invariant.
    """
    return (beta1 * space_scale_m**alpha1, beta2 * time_scale_steps**alpha2,
            alpha1, alpha2)


def eta1_in_units(eta1: float, eta2: float, speed_scale: float) -> float:
    """eta1 when speeds are measured in units ``speed_scale`` times larger."""
    return eta1 * speed_scale**(1.0 - eta2)
