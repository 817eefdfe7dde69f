"""Scenario configuration.

Every field has the benchmark value as its default, so an empty TOML file (or
``ScenarioConfig()``) describes the 24 h, 10,000-load closed-loop benchmark.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import tomli

from .control import ControllerConfig
from .errors import InvalidScenario
from .population import HeterogeneitySpec
from .trajectory import SetpointSchedule

MODES = ("agents", "pde", "coupled")
SIGMA_KINDS = ("zero", "sin", "switching")


@dataclass(frozen=True)
class PopulationConfig:
    n: int = 10_000
    seed: int = 1
    distribution: Literal["lognormal", "normal"] = "lognormal"
    C_mean: float = 10.0
    C_std: float = 3.0
    truncate_ratio: float | None = 3.5
    R: float = 2.0
    P: float = 14.0
    eta: float = 2.5
    noise: float = 0.0        # degC^2/h added to every load, 0 disables

    def heterogeneity(self) -> HeterogeneitySpec:
        return HeterogeneitySpec(self.distribution, self.C_mean, self.C_std, self.truncate_ratio,
                                 self.R, self.P, self.eta)


@dataclass(frozen=True)
class ModelConfig:
    """Representative parameters of the aggregate Fokker-Planck model."""

    beta: float = 0.1
    R: float = 2.0
    C: float = 10.0
    P: float = 14.0
    eta: float = 2.5
    width: float = 0.5


@dataclass(frozen=True)
class AmbientConfig:
    """Piecewise-linear ambient temperature table (hours, degC), held constant outside."""

    times: tuple[float, ...] = (0.0, 6.0, 12.0, 15.0, 20.0, 24.0)
    values: tuple[float, ...] = (28.0, 29.0, 31.5, 32.0, 30.0, 28.5)

    def __post_init__(self):
        if len(self.times) != len(self.values) or not self.times:
            raise InvalidScenario("ambient times and values must be non-empty and of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidScenario("ambient times must be strictly increasing")

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))


@dataclass(frozen=True)
class DisturbanceConfig:
    """Forced-switching rate and boundary-flux profile.

    ``sigma_kind``: ``zero``; ``sin`` (both boundary fluxes equal to
    ``sigma_amplitude * sin(2 pi t / sigma_period)`` loads/h); or ``switching``
    (thermostat outflow at the band edges computed from the field).
    """

    rate: float = 0.0
    sigma_kind: str = "zero"
    sigma_amplitude: float = 0.0
    sigma_period: float = 1.0

    def __post_init__(self):
        if self.rate < 0:
            raise InvalidScenario("forced-switching rate must be >= 0")
        if self.sigma_kind not in SIGMA_KINDS:
            raise InvalidScenario(f"sigma_kind must be one of {SIGMA_KINDS}")
        if self.sigma_period <= 0:
            raise InvalidScenario("sigma_period must be positive")


@dataclass(frozen=True)
class ControlSection:
    a: float = -1.0
    k0: float = 7.5
    smoothing_window: int = 10
    denom_floor_frac: float = 0.01
    literal_formula: bool = False
    linearization: Literal["discrete", "one_step", "continuum"] = "discrete"
    u_max: float | None = 2.0       # band-speed saturation (degC/h), None disables

    def __post_init__(self):
        if self.linearization not in ("discrete", "one_step", "continuum"):
            raise InvalidScenario(f"unknown linearization {self.linearization!r}")
        if self.u_max is not None and not self.u_max > 0:
            raise InvalidScenario("u_max must be positive or None")

    def controller(self, n_loads: float) -> ControllerConfig:
        return ControllerConfig(self.a, self.k0, self.smoothing_window,
                                max(self.denom_floor_frac * n_loads, 1e-12), self.literal_formula)


@dataclass(frozen=True)
class ScheduleConfig:
    """Set-point: initial value plus ``(t_start, t_end, target)`` transitions."""

    x0: float = 20.0
    steps: tuple[tuple[float, float, float], ...] = ((4.0, 10.0, 20.4), (14.0, 19.0, 19.8))

    def build(self, horizon: float) -> SetpointSchedule:
        return SetpointSchedule.from_steps(self.x0, self.steps, t_end=horizon)


@dataclass(frozen=True)
class SolverConfig:
    n_cells: int = 100
    ctrl_dt: float = 1.0 / 360.0    # control period (h)
    spinup_h: float = 2.0           # open-loop settling before t=0, band held at x0
    log_every: int = 1              # log one row every this many control periods
    check_positivity: bool = True

    def __post_init__(self):
        if self.n_cells < 4 or self.ctrl_dt <= 0 or self.spinup_h < 0 or self.log_every < 1:
            raise InvalidScenario("invalid solver settings")


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "agents"
    horizon: float = 24.0
    open_loop: bool = False
    y_d: str | float = "initial"    # "initial": y at t=0 minus initial_error
    initial_error: float = 0.0
    n_temp_samples: int = 200
    population: PopulationConfig = field(default_factory=PopulationConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    ambient: AmbientConfig = field(default_factory=AmbientConfig)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    control: ControlSection = field(default_factory=ControlSection)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidScenario(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.horizon > 0:
            raise InvalidScenario("horizon must be positive")
        if self.population.n < 1:
            raise InvalidScenario("population size must be >= 1")
        for name, val in dataclasses.asdict(self.model).items():
            if not val > 0:
                raise InvalidScenario(f"model.{name} must be positive")
        if isinstance(self.y_d, str) and self.y_d != "initial":
            raise InvalidScenario("y_d must be 'initial' or a number")

    def replace(self, **changes) -> "ScenarioConfig":
        """Copy with top-level fields or dotted ``section.field`` keys replaced."""
        top, nested = {}, {}
        for key, val in changes.items():
            if "." in key:
                sec, name = key.split(".", 1)
                nested.setdefault(sec, {})[name] = val
            else:
                top[key] = val
        for sec, vals in nested.items():
            top[sec] = dataclasses.replace(top.get(sec, getattr(self, sec)), **vals)
        return dataclasses.replace(self, **top)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {"population": PopulationConfig, "model": ModelConfig, "ambient": AmbientConfig,
             "disturbance": DisturbanceConfig, "control": ControlSection,
             "schedule": ScheduleConfig, "solver": SolverConfig}


def _tupleize(val):
    if isinstance(val, list):
        return tuple(_tupleize(v) for v in val)
    return val


def config_from_dict(data: dict) -> ScenarioConfig:
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidScenario(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    for key, val in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            names = {f.name for f in dataclasses.fields(cls)}
            bad = set(val) - names
            if bad:
                raise InvalidScenario(f"unknown keys in [{key}]: {sorted(bad)}")
            kw[key] = cls(**{k: _tupleize(v) for k, v in val.items()})
        else:
            kw[key] = val
    return ScenarioConfig(**kw)


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        return config_from_dict(tomli.load(fh))
