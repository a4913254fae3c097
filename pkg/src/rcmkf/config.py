"""Experiment configuration: YAML schema, validation, scenario building.

The config file is a nested key-value document mirroring the scenario and
experiment types field for field. Angles are degrees and distances meters at
this boundary only; everything becomes radians/SI on the way in. See
docs/config_schema.md for the documented schema.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

import numpy as np
import yaml

from .scenario import ManeuverSchedule, NoiseSpec, Scenario, cv_model, generate_case

__all__ = [
    "ConfigError",
    "ConsistencyConfig",
    "ExperimentConfig",
    "GeometryConfig",
    "GoldenConfig",
    "GoldenPoint",
    "ManeuverConfig",
    "NoiseConfig",
    "ScenarioConfig",
    "build_noise",
    "build_scenario",
    "config_from_dict",
    "config_to_dict",
    "default_golden_grid",
    "default_sigma_grid",
    "dump_config",
    "load_config",
]


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass(frozen=True)
class NoiseConfig:
    sigma_r_m: float = 200.0
    sigma_theta_deg: float = 2.5
    sigma_phi_deg: float = 0.0
    sigma_rdot_mps: float = 1.0
    rho: float = 0.3


@dataclass(frozen=True)
class ManeuverConfig:
    start_step: int
    accel_mps2: tuple[float, ...]


@dataclass(frozen=True)
class ScenarioConfig:
    """Inline scenario description (alternative to a benchmark case id)."""

    steps: int = 100
    runs: int = 500
    sample_interval_s: float = 1.0
    process_noise_std_mps2: float = 0.01
    initial_position_m: tuple[float, ...] = (80000.0, 80000.0)
    initial_velocity_mps: tuple[float, ...] = (200.0, 200.0)
    maneuvers: tuple[ManeuverConfig, ...] = ()
    noise: NoiseConfig = NoiseConfig()


@dataclass(frozen=True)
class GeometryConfig:
    """Fixed true spherical point for the consistency sweep (2D radar)."""

    r_m: float = 10000.0
    theta_deg: float = 45.0
    rdot_mps: float = 100.0


@dataclass(frozen=True)
class ConsistencyConfig:
    sigma_theta_deg_max: float = 30.0
    samples: int = 1000
    tail: float = 0.001
    geometry: GeometryConfig = GeometryConfig()
    noise: NoiseConfig = NoiseConfig(
        sigma_r_m=100.0, sigma_theta_deg=0.0, sigma_phi_deg=0.0, sigma_rdot_mps=5.0, rho=0.0
    )


@dataclass(frozen=True)
class GoldenPoint:
    """One operating point for the brute-force moment tables (3D)."""

    r_m: float
    theta_deg: float
    phi_deg: float
    rdot_mps: float
    sigma_r_m: float
    sigma_theta_deg: float
    sigma_phi_deg: float
    sigma_rdot_mps: float
    rho: float


@dataclass(frozen=True)
class GoldenConfig:
    samples: int = 10_000_000
    points: tuple[GoldenPoint, ...] = ()  # empty selects the default grid


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 42
    jobs: int = 1
    out: str = "results"
    variants: tuple[str, ...] = ("rcmkf_u", "rcmkf_d")
    case: int | None = 1
    runs: int | None = None
    scenario: ScenarioConfig | None = None
    consistency: ConsistencyConfig = ConsistencyConfig()
    golden: GoldenConfig = GoldenConfig()


def _from_mapping(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(value, f"{path}.{name}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


_NESTED = {
    "noise": NoiseConfig,
    "geometry": GeometryConfig,
    "scenario": ScenarioConfig,
    "consistency": ConsistencyConfig,
    "golden": GoldenConfig,
}


def _coerce(value, path):
    name = path.rsplit(".", 1)[-1]
    if value is None:
        return None
    if name in _NESTED:
        return _from_mapping(_NESTED[name], value, path)
    if name == "maneuvers":
        return tuple(_from_mapping(ManeuverConfig, m, f"{path}[{i}]") for i, m in enumerate(value))
    if name == "points":
        return tuple(_from_mapping(GoldenPoint, pt, f"{path}[{i}]") for i, pt in enumerate(value))
    if isinstance(value, list):
        return tuple(value)
    return value


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from plain data."""
    cfg = _from_mapping(ExperimentConfig, data or {}, "config")
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if not cfg.variants:
        raise ConfigError("at least one filter variant must be selected")
    for v in cfg.variants:
        if str(v).lower() not in ("rcmkf_u", "rcmkf_d"):
            raise ConfigError(f"unknown filter variant {v!r}")
    if cfg.case is None and cfg.scenario is None:
        raise ConfigError("either a case id or an inline scenario is required")
    if cfg.case is not None and cfg.case not in (1, 2):
        raise ConfigError(f"unknown case {cfg.case!r} (supported: 1, 2)")
    if cfg.runs is not None and cfg.runs < 1:
        raise ConfigError("runs must be >= 1")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
    if cfg.consistency.samples < 1:
        raise ConfigError("consistency samples must be >= 1")
    if cfg.consistency.sigma_theta_deg_max < 0.5:
        raise ConfigError("sigma_theta_deg_max must be at least 0.5 (empty sweep grid)")
    if cfg.golden.samples < 10_000:
        raise ConfigError("golden samples must be >= 1e4")


def config_to_dict(cfg) -> dict:
    """Plain nested dict (lists for sequences), invertible by config_from_dict."""
    if dataclasses.is_dataclass(cfg) and not isinstance(cfg, type):
        return {f.name: config_to_dict(getattr(cfg, f.name)) for f in fields(cfg)}
    if isinstance(cfg, tuple):
        return [config_to_dict(v) for v in cfg]
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    return config_from_dict(data or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def build_noise(nc: NoiseConfig) -> NoiseSpec:
    try:
        return NoiseSpec(
            sigma_r=nc.sigma_r_m,
            sigma_theta=math.radians(nc.sigma_theta_deg),
            sigma_phi=math.radians(nc.sigma_phi_deg),
            sigma_rdot=nc.sigma_rdot_mps,
            rho=nc.rho,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid noise spec: {exc}") from exc


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    """Materialize the scenario selected by a config (case or inline)."""
    if cfg.scenario is not None:
        sc = cfg.scenario
        pos = np.asarray(sc.initial_position_m, dtype=float)
        vel = np.asarray(sc.initial_velocity_mps, dtype=float)
        if pos.shape != vel.shape or len(pos) not in (2, 3):
            raise ConfigError("initial position/velocity must both be 2- or 3-vectors")
        dim = len(pos)
        try:
            scenario = Scenario(
                model=cv_model(dim, sc.sample_interval_s, sc.process_noise_std_mps2),
                initial_state=np.concatenate([pos, vel]),
                maneuvers=ManeuverSchedule.from_pairs(
                    (m.start_step, m.accel_mps2) for m in sc.maneuvers
                ),
                noise=build_noise(sc.noise),
                steps=sc.steps,
                runs=cfg.runs if cfg.runs is not None else sc.runs,
                seed=cfg.seed,
                name="scenario",
            )
        except ValueError as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc
        return scenario
    try:
        base = generate_case(cfg.case)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return dataclasses.replace(
        base,
        runs=cfg.runs if cfg.runs is not None else base.runs,
        seed=cfg.seed,
    )


def default_sigma_grid(max_deg: float) -> np.ndarray:
    """Sweep grid: 0.5 degrees, then integer degrees up to the maximum."""
    if max_deg < 0.5:
        return np.array([])
    return np.concatenate([[0.5], np.arange(1.0, math.floor(max_deg) + 1.0)])


def default_golden_grid() -> tuple[GoldenPoint, ...]:
    """Validation grid for the moment oracle.

    Crosses range, bearing-noise level and range/range-rate correlation;
    elevation noise is tied to the bearing noise so every 3D term is
    exercised.
    """
    points = []
    for r_km in (1.0, 10.0, 100.0):
        for sig_deg in (1.0, 5.0, 15.0, 30.0):
            for rho in (0.0, 0.3, 0.9):
                points.append(
                    GoldenPoint(
                        r_m=1000.0 * r_km,
                        theta_deg=30.0,
                        phi_deg=20.0,
                        rdot_mps=100.0,
                        sigma_r_m=100.0,
                        sigma_theta_deg=sig_deg,
                        sigma_phi_deg=sig_deg,
                        sigma_rdot_mps=5.0,
                        rho=rho,
                    )
                )
    return tuple(points)
