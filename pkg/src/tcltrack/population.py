"""Agent-level TCL simulation with deadband switching and forced toggles.

Also builds heterogeneous populations and bins them into density histograms.

Cooling convention: an ON load (mode 1) pulls its temperature towards
``x_e - R * P``; an OFF load relaxes towards the ambient ``x_e``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Literal

import numpy as np
from scipy import optimize, special, stats

from .deadband import Deadband
from .errors import InvalidScenario, NumericFailure
from .fpe import DistributionField


@dataclass(frozen=True)
class TclParameters:
    R: float = 2.0     # degC/kW
    C: float = 10.0    # kWh/degC
    P: float = 14.0    # kW
    eta: float = 2.5

    def __post_init__(self):
        for name in ("R", "C", "P", "eta"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise InvalidScenario(f"{name} must be positive and finite, got {val}")

    @property
    def tau(self) -> float:
        return self.R * self.C


@dataclass(frozen=True)
class TclAgent:
    temp: float
    mode: int
    params: TclParameters = TclParameters()

    def __post_init__(self):
        if self.mode not in (0, 1):
            raise InvalidScenario(f"mode must be 0 or 1, got {self.mode}")


def step_tcl(agent: TclAgent, x_e: float, dt: float, noise: float | None = None,
             rng: np.random.Generator | None = None) -> TclAgent:
    """Advance one load by ``dt`` hours with the exact exponential solution.

    With ``noise`` (a diffusion intensity beta in degC^2/h) a zero-mean Gaussian
    increment of variance ``2 * beta * dt`` is added after the deterministic part.
    The operating mode is left unchanged; see :func:`switch_logic`.
    """
    if not dt > 0:
        raise InvalidScenario(f"dt must be positive, got {dt}")
    p = agent.params
    target = x_e - agent.mode * p.R * p.P
    temp = target + (agent.temp - target) * np.exp(-dt / p.tau)
    if noise:
        rng = rng if rng is not None else np.random.default_rng()
        temp += np.sqrt(2.0 * noise * dt) * rng.standard_normal()
    if not np.isfinite(temp):
        raise NumericFailure(f"non-finite temperature {temp}")
    return TclAgent(float(temp), agent.mode, p)


def switch_logic(temp: float, s_prev: int, r: int, band: Deadband) -> int:
    if temp >= band.upper:
        return 1
    if temp <= band.lower:
        return 0
    # one-bit sum of (s AND r) and (s OR r); the carry is discarded
    return ((s_prev & r) + (s_prev | r)) & 1


def switch_modes(temp: np.ndarray, s_prev: np.ndarray, r: np.ndarray, band: Deadband) -> np.ndarray:
    """Vectorised :func:`switch_logic`."""
    s = np.bitwise_xor(s_prev, r).astype(np.int8)
    s[temp >= band.upper] = 1
    s[temp <= band.lower] = 0
    return s


@dataclass(frozen=True)
class HeterogeneitySpec:
    """How the thermal capacitance varies across the population.

    ``distribution="lognormal"`` fits the underlying normal so the capacitance has
    the requested mean and standard deviation.  With ``truncate_ratio`` the
    log-normal is truncated symmetrically in log space so that max(C)/min(C) never
    exceeds the ratio; the fit accounts for the truncation.
    """

    distribution: Literal["lognormal", "normal"] = "lognormal"
    mean: float = 10.0
    std: float = 3.0
    truncate_ratio: float | None = 3.5
    R: float = 2.0
    P: float = 14.0
    eta: float = 2.5

    def __post_init__(self):
        if self.distribution not in ("lognormal", "normal"):
            raise InvalidScenario(f"unknown distribution {self.distribution!r}")
        if not (self.mean > 0 and self.std > 0):
            raise InvalidScenario("capacitance mean and std must be positive")
        if self.truncate_ratio is not None and self.truncate_ratio <= 1:
            raise InvalidScenario("truncate_ratio must exceed 1")


def _trunc_lognormal_moments(mu: float, s: float, half_width: float) -> tuple[float, float]:
    """Mean and std of exp(Y), Y ~ N(mu, s^2) truncated to [mu - half_width, mu + half_width]."""
    a = half_width / s
    z = special.ndtr(a) - special.ndtr(-a)

    def raw(k):
        tail = special.ndtr(a - k * s) - special.ndtr(-a - k * s)
        return np.exp(k * mu + 0.5 * (k * s) ** 2) * tail / z

    m1, m2 = raw(1), raw(2)
    return m1, np.sqrt(max(m2 - m1 * m1, 0.0))


@lru_cache(maxsize=32)
def fit_lognormal(mean: float, std: float, truncate_ratio: float | None) -> tuple[float, float, float]:
    """Return (mu, s, half_width) of the underlying normal; half_width is inf when untruncated."""
    if truncate_ratio is None:
        s2 = np.log1p((std / mean) ** 2)
        return float(np.log(mean) - 0.5 * s2), float(np.sqrt(s2)), float("inf")
    h = 0.5 * np.log(truncate_ratio)
    cv = std / mean

    def cv_gap(s):
        m, sd = _trunc_lognormal_moments(0.0, s, h)
        return sd / m - cv

    hi = 5.0 * h  # already close to the log-uniform limit
    if cv_gap(hi) < 0:
        raise InvalidScenario(f"std/mean={cv:.3f} unreachable with max/min ratio {truncate_ratio}")
    s = optimize.brentq(cv_gap, 1e-6, hi, xtol=1e-14)
    m, _ = _trunc_lognormal_moments(0.0, s, h)
    return float(np.log(mean / m)), float(s), float(h)


def sample_capacitance(n: int, spec: HeterogeneitySpec, rng: np.random.Generator) -> np.ndarray:
    if spec.distribution == "normal":
        lo = -spec.mean / spec.std  # keep C > 0
        return stats.truncnorm.rvs(lo, np.inf, loc=spec.mean, scale=spec.std, size=n, random_state=rng)
    mu, s, h = fit_lognormal(spec.mean, spec.std, spec.truncate_ratio)
    if np.isinf(h):
        return np.exp(rng.normal(mu, s, size=n))
    return np.exp(mu + s * stats.truncnorm.rvs(-h / s, h / s, size=n, random_state=rng))


class Population:
    """Struct-of-arrays container for N loads.

    Indexing yields :class:`TclAgent` values, so a population behaves like a
    sequence of agents while stepping stays vectorised.
    """

    def __init__(self, temp, mode, R, C, P, eta):
        self.temp = np.asarray(temp, dtype=float).copy()
        self.mode = np.asarray(mode, dtype=np.int8).copy()
        n = self.temp.size
        self.R, self.C, self.P, self.eta = (np.broadcast_to(np.asarray(a, dtype=float), (n,)).copy()
                                            for a in (R, C, P, eta))

    @classmethod
    def from_agents(cls, agents) -> "Population":
        agents = list(agents)
        return cls([a.temp for a in agents], [a.mode for a in agents],
                   [a.params.R for a in agents], [a.params.C for a in agents],
                   [a.params.P for a in agents], [a.params.eta for a in agents])

    def __len__(self) -> int:
        return self.temp.size

    def __getitem__(self, i: int) -> TclAgent:
        return TclAgent(float(self.temp[i]), int(self.mode[i]),
                        TclParameters(float(self.R[i]), float(self.C[i]), float(self.P[i]), float(self.eta[i])))

    def __iter__(self) -> Iterator[TclAgent]:
        return (self[i] for i in range(len(self)))

    def copy(self) -> "Population":
        return Population(self.temp, self.mode, self.R, self.C, self.P, self.eta)

    @property
    def power_weights(self) -> np.ndarray:
        return self.P / self.eta

    def drift(self, x_e: float, temp=None, mode=None) -> np.ndarray:
        temp = self.temp if temp is None else temp
        mode = self.mode if mode is None else mode
        return (x_e - temp - mode * self.R * self.P) / (self.R * self.C)

    def max_drift(self, x_e: float, band: Deadband) -> float:
        """Largest |dx/dt| any load can have anywhere in ``band``."""
        return float(max(np.max(np.abs(self.drift(x_e, np.full(len(self), x), np.full(len(self), m, np.int8))))
                         for x in (band.lower, band.upper) for m in (0, 1)))

    def step(self, x_e: float, dt: float, band: Deadband, *, rate: float = 0.0,
             noise: float = 0.0, seed: int = 0, step_index: int = 0) -> None:
        """Advance every load by ``dt`` in place: drift, then noise, then switching.

        Randomness is counter based: the draws of load i at step k depend only on
        (seed, k, i), so any partition of the loads reproduces the serial run.
        """
        if not dt > 0:
            raise InvalidScenario(f"dt must be positive, got {dt}")
        target = x_e - self.mode * self.R * self.P
        self.temp = target + (self.temp - target) * np.exp(-dt / (self.R * self.C))
        n = len(self)
        if noise > 0:
            u = _uniforms(seed, step_index, 1, n)
            self.temp += np.sqrt(2.0 * noise * dt) * special.ndtri(u)
        if not np.all(np.isfinite(self.temp)):
            raise NumericFailure(f"non-finite temperature at step {step_index}")
        if rate > 0:
            r = (_uniforms(seed, step_index, 0, n) < -np.expm1(-rate * dt)).astype(np.int8)
        else:
            r = np.zeros(n, dtype=np.int8)
        self.mode = switch_modes(self.temp, self.mode, r, band)


def _uniforms(seed: int, step_index: int, stream: int, n: int) -> np.ndarray:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, 2 * step_index + stream], dtype=np.uint64)
    u = np.random.Generator(np.random.Philox(key=key)).random(n)
    # ndtri(0) is -inf
    return np.clip(u, 1e-300, None)


def build_population(n: int, spec: HeterogeneitySpec, band: Deadband, seed: int) -> Population:
    if n < 1:
        raise InvalidScenario(f"population size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    C = sample_capacitance(n, spec, rng)
    temp = rng.uniform(band.lower, band.upper, size=n)
    mode = (rng.random(n) < 0.5).astype(np.int8)
    return Population(temp, mode, spec.R, C, spec.P, spec.eta)


def estimate_distribution(agents, band: Deadband, n_bins: int, time: float = 0.0) -> DistributionField:
    """Histogram densities (loads per unit z) of ON and OFF loads over the band.

    Loads outside the band are counted in the nearest edge cell.
    """
    if n_bins < 4:
        raise InvalidScenario(f"n_bins must be >= 4, got {n_bins}")
    pop = agents if isinstance(agents, Population) else Population.from_agents(agents)
    if len(pop) == 0:
        return DistributionField.zeros(n_bins, time)
    z = (pop.temp - band.lower) / band.width
    idx = np.clip(np.floor(z * n_bins).astype(np.int64), 0, n_bins - 1)
    on = pop.mode == 1
    w = np.bincount(idx[on], minlength=n_bins) * float(n_bins)
    v = np.bincount(idx[~on], minlength=n_bins) * float(n_bins)
    return DistributionField(w, v, time)


def aggregate_power(agents) -> float:
    """ON-state electrical power normalised by the all-ON total."""
    pop = agents if isinstance(agents, Population) else Population.from_agents(agents)
    if len(pop) == 0:
        return 0.0
    wts = pop.power_weights
    return float(np.sum(wts[pop.mode == 1]) / np.sum(wts))


def duty_cycle_power(x_e, x_set, x_set_rate, R, C, P, eta=1.0) -> float:
    """Normalised power a population draws while its band centre follows ``x_set``.

    A load that stays inside a band moving at ``x_set_rate`` must have mean drift
    equal to that rate, which fixes its ON fraction at
    ``(x_e - x_set - R C x_set_rate) / (R P)``.
    """
    R, C, P, eta = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (R, C, P, eta)))
    duty = np.clip((x_e - x_set - R * C * x_set_rate) / (R * P), 0.0, 1.0)
    wts = P / eta
    return float(np.sum(wts * duty) / np.sum(wts))
