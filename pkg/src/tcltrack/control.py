"""Feedback-linearising aggregate power tracking.

The output is the weighted ON-state power ``y = (P/eta) * int (a x + b) w dx``
with ``b = -a x_p`` so that ``a x + b = a (x - x_p)``.  The band velocity ``u``
is chosen so the tracking error obeys ``de/dt = phi - dy_d/dt + Gamma`` and the
stabiliser ``phi = dy_d/dt - k0 e`` leaves ``de/dt = -k0 e + Gamma``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .deadband import Deadband
from .errors import ControlSingularity, InvalidScenario, NumericFailure
from .fpe import DistributionField, NormalizedSystem, face_velocities, interior_fluxes, upwind_values
from .population import Population


@dataclass(frozen=True)
class AggregateModel:
    """Representative parameters of the population used by the aggregate model."""

    beta: float = 0.1   # degC^2/h
    R: float = 2.0
    C: float = 10.0
    P: float = 14.0
    eta: float = 2.5

    def alpha(self, x, x_e: float, mode: int):
        return (x_e - np.asarray(x) - mode * self.R * self.P) / (self.R * self.C)

    def system(self, band: Deadband, x_e: float, u: float = 0.0, **kw) -> NormalizedSystem:
        return NormalizedSystem.from_physical(band, x_e, self.beta, self.R, self.C, self.P, u=u, **kw)


@dataclass(frozen=True)
class ControllerConfig:
    a: float = -1.0
    k0: float = 7.5
    smoothing_window: int = 10
    denom_floor: float = 1.0
    literal_formula: bool = False

    def __post_init__(self):
        if self.a == 0:
            raise InvalidScenario("weighting slope a must be non-zero")
        if not self.k0 > 0:
            raise InvalidScenario("k0 must be positive")
        if self.smoothing_window < 1:
            raise InvalidScenario("smoothing_window must be >= 1")
        if not self.denom_floor > 0:
            raise InvalidScenario("denom_floor must be positive")


@dataclass
class ControllerState:
    x_ref: float
    smoothing_window: int = 10
    e: float = 0.0
    u_history: deque = field(default=None)
    u_last: float | None = None

    def __post_init__(self):
        if self.u_history is None:
            self.u_history = deque(maxlen=self.smoothing_window)


def offset_from_setpoint(a: float, x_p: float, xp_dot: float) -> tuple[float, float]:
    """(b, db/dt) for the weighting a (x - x_p)."""
    return -a * x_p, -a * xp_dot


def weighted_output(source, band: Deadband, a: float, b: float, P: float = 14.0, eta: float = 2.5) -> float:
    """Weighted ON power from a density field (midpoint rule) or exactly from agents."""
    if isinstance(source, Population):
        on = source.mode == 1
        return float(np.sum(source.power_weights[on] * (a * source.temp[on] + b)))
    x = band.lower + source.centers * band.width
    return float(P / eta * np.sum((a * x + b) * source.w) * source.dz)


def compute_control(field: DistributionField, band: Deadband, model: AggregateModel, x_e: float,
                    cfg: ControllerConfig, b_dot: float, phi: float) -> float:
    """Band velocity u (degC/h) from the closed-form law in temperature coordinates.

    The default form is the one whose substitution into the output dynamics
    cancels them exactly:

        u = -[beta (w(upper) - w(lower)) - int (alpha_on + b_dot / a) w dx + eta phi / (a P)] / int w dx

    ``cfg.literal_formula`` switches to the typeset variant, which divides by
    ``width * int w dx`` and uses ``b_dot`` in place of ``b_dot / a``.
    """
    mass = field.mass_on()
    if abs(mass) < cfg.denom_floor:
        raise ControlSingularity(f"ON mass {mass:.4g} below floor {cfg.denom_floor:.4g}")
    top, bottom = field.boundary_values("w")
    grad_term = model.beta * (top - bottom) / band.width  # densities in loads/degC
    x = band.lower + field.centers * band.width
    drift_term = float(np.sum(model.alpha(x, x_e, 1) * field.w) * field.dz)
    gain_term = model.eta * phi / (cfg.a * model.P)
    if cfg.literal_formula:
        return -(grad_term - drift_term - b_dot * mass + gain_term) / (band.width * mass)
    return -(grad_term - drift_term - b_dot / cfg.a * mass + gain_term) / mass


def output_rate(field: DistributionField, sys: NormalizedSystem, band: Deadband, a: float, b: float,
                b_dot: float, P: float, eta: float) -> tuple[float, float]:
    """Rate of the discrete weighted output with no switching disturbance, and its
    derivative with respect to ``u_hat`` (upwind pattern held fixed)."""
    n, dz, width = field.n_cells, field.dz, band.width
    vel = face_velocities(n, sys, 1)
    jw = np.zeros(n + 1)
    jw[1:-1] = interior_fluxes(field.w, vel, sys.beta_hat, dz)
    djw = np.zeros(n + 1)
    djw[1:-1] = -2.0 * upwind_values(field.w, vel)
    c = a * (band.lower + field.centers * width) + b
    mass = float(np.sum(field.w) * dz)
    # sum_i c_i (J_{i-1/2} - J_{i+1/2}) == sum over interior faces of (c_{i+1} - c_i) J_f
    rate = P / eta * (float(np.sum(c * (jw[:-1] - jw[1:]))) + (a * width * sys.u_hat + b_dot) * mass)
    slope = P / eta * (float(np.sum(c * (djw[:-1] - djw[1:]))) + a * width * mass)
    return rate, slope


def linearizing_control(field: DistributionField, sys: NormalizedSystem, band: Deadband,
                        cfg: ControllerConfig, b: float, b_dot: float, phi: float,
                        P: float, eta: float, u_guess: float = 0.0, max_iter: int = 30) -> float:
    """Band velocity u (degC/h) making the semi-discrete output rate equal ``phi``.

    This is the same input-output linearisation as :func:`compute_control`, applied
    to the finite-volume model instead of its continuum limit, so the discrete
    error dynamics follow the stabiliser exactly.  The rate is piecewise linear in
    ``u_hat`` (upwinding), so Newton terminates once the upwind pattern settles.
    """
    mass = field.mass_on()
    if abs(mass) < cfg.denom_floor:
        raise ControlSingularity(f"ON mass {mass:.4g} below floor {cfg.denom_floor:.4g}")
    u_hat = u_guess / band.width
    scale = abs(phi) + P / eta * abs(cfg.a) * band.width * abs(mass)
    nominal = P / eta * abs(cfg.a) * band.width * abs(mass)
    for _ in range(max_iter):
        rate, slope = output_rate(field, sys.with_control(u_hat), band, cfg.a, b, b_dot, P, eta)
        gap = rate - phi
        if abs(gap) <= 1e-13 * scale:
            break
        if abs(slope) < 1e-9 * nominal:
            raise ControlSingularity("output rate does not depend on the control")
        u_hat -= gap / slope
    else:
        raise ControlSingularity(f"no control reproduces the requested rate (residual {gap:.3e})")
    if not np.isfinite(u_hat):
        raise NumericFailure("non-finite control")
    return u_hat * band.width


def one_step_control(field: DistributionField, sys: NormalizedSystem, band: Deadband,
                     cfg: ControllerConfig, b_next: float, dt: float, y_target: float,
                     P: float, eta: float, u_guess: float = 0.0, max_iter: int = 30) -> float:
    """Band velocity u (degC/h) such that one explicit solver step of length ``dt``
    (no switching disturbance) lands exactly on ``y_target``.

    With ``y_target = y + dt * phi`` the sampled error obeys
    ``e[n+1] = (1 - k0 dt) e[n]`` to round-off when the controller acts every
    solver step.  ``y_next(u)`` is piecewise quadratic in ``u``.
    """
    mass = field.mass_on()
    if abs(mass) < cfg.denom_floor:
        raise ControlSingularity(f"ON mass {mass:.4g} below floor {cfg.denom_floor:.4g}")
    n, dz, width, a = field.n_cells, field.dz, band.width, cfg.a
    z = field.centers
    k = P / eta * dz
    scale = abs(y_target) + k * abs(a) * width * np.sum(np.abs(field.w))
    nominal = k * abs(a) * abs(np.sum(field.w)) * dt
    u = u_guess
    for _ in range(max_iter):
        s = sys.with_control(u / width)
        vel = face_velocities(n, s, 1)
        jw = np.zeros(n + 1)
        jw[1:-1] = interior_fluxes(field.w, vel, s.beta_hat, dz)
        djw = np.zeros(n + 1)
        djw[1:-1] = -2.0 * upwind_values(field.w, vel) / width
        w_next = field.w - dt * (jw[1:] - jw[:-1]) / dz
        dw_next = -dt * (djw[1:] - djw[:-1]) / dz
        c_next = a * (band.lower + u * dt + z * width) + b_next
        gap = k * float(np.sum(c_next * w_next)) - y_target
        if abs(gap) <= 1e-14 * scale:
            break
        slope = k * float(np.sum(a * dt * w_next + c_next * dw_next))
        if abs(slope) < 1e-9 * nominal:
            raise ControlSingularity("output does not depend on the control")
        u -= gap / slope
    else:
        raise ControlSingularity(f"no control reaches the requested output (residual {gap:.3e})")
    if not np.isfinite(u):
        raise NumericFailure("non-finite control")
    return float(u)


def stabilizer(e: float, yd_dot: float, k0: float) -> float:
    return yd_dot - k0 * e


def error_closed_form(e0: float, k0: float, gamma, t: float, gamma_inf: float | None = None
                      ) -> tuple[float, float | None]:
    """Regulation error ``e0 exp(-k0 t) + int_0^t gamma(s) exp(-k0 (t - s)) ds`` and,
    if ``gamma_inf`` is given, the envelope ``|e0| exp(-k0 t) + gamma_inf / k0 (1 - exp(-k0 t))``."""
    if not k0 > 0:
        raise InvalidScenario("k0 must be positive")
    decay = np.exp(-k0 * t)
    conv = integrate.quad(lambda s: gamma(s) * np.exp(-k0 * (t - s)), 0.0, t, limit=200)[0] if t > 0 else 0.0
    e = e0 * decay + conv
    bound = None if gamma_inf is None else abs(e0) * decay + gamma_inf / k0 * (1.0 - decay)
    return float(e), bound


def smooth_control(state: ControllerState, u_raw: float) -> float:
    """Push ``u_raw`` into the moving window and return the window mean."""
    state.u_history.append(float(u_raw))
    return float(np.mean(state.u_history))


def advance_reference(state: ControllerState, u_applied: float, dt: float) -> ControllerState:
    """Integrate the reference over the last ``dt`` hours (trapezoid on successive calls)."""
    if not dt > 0:
        raise InvalidScenario("dt must be positive")
    prev = u_applied if state.u_last is None else state.u_last
    state.x_ref += 0.5 * (prev + u_applied) * dt
    state.u_last = float(u_applied)
    return state
