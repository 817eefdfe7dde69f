"""Conservative finite-volume solver for the coupled ON/OFF Fokker-Planck system.

The system is solved on the fixed interval z in [0, 1] obtained from the moving
deadband by ``z = (x - lower) / width``.  Densities are stored as cell averages
in loads per unit z, so ``sum(w) * dz`` is the number of ON loads.

For the ON density ``w`` the face flux is

    J = -(beta_hat * w_z - (alpha_on_hat - 2 u_hat) * w)

with central diffusion and first-order upwind advection.  The boundary faces
carry the switching fluxes exactly: ``J(1) = -sigma_upper`` and
``J(0) = -sigma_lower`` for ``w``, and the negated values for ``v``.  A source
``delta`` (net OFF->ON switching inside the band) is added to ``w`` and removed
from ``v``.  Because every face flux appears twice with opposite signs, the
discrete masses change by exactly the boundary and source bookkeeping.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .deadband import Deadband, denormalize, normalize  # noqa: F401  (re-exported)
from .errors import InvalidScenario, NumericFailure, PositivityViolation, StepSizeError

POSITIVITY_TOL = 1e-12
SAFETY = 0.5


@dataclass
class DistributionField:
    """Cell-average ON (``w``) and OFF (``v``) densities on a uniform z-grid."""

    w: np.ndarray
    v: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.w.shape != self.v.shape or self.w.ndim != 1:
            raise InvalidScenario("w and v must be 1-d arrays of equal length")

    @classmethod
    def uniform(cls, n_cells: int, n_on: float, n_off: float, time: float = 0.0):
        return cls(np.full(n_cells, float(n_on)), np.full(n_cells, float(n_off)), time)

    @classmethod
    def zeros(cls, n_cells: int, time: float = 0.0):
        return cls(np.zeros(n_cells), np.zeros(n_cells), time)

    @property
    def n_cells(self) -> int:
        return self.w.size

    @property
    def dz(self) -> float:
        return 1.0 / self.w.size

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dz

    def mass_on(self) -> float:
        return float(np.sum(self.w) * self.dz)

    def mass_off(self) -> float:
        return float(np.sum(self.v) * self.dz)

    def total_mass(self) -> float:
        return self.mass_on() + self.mass_off()

    def boundary_values(self, which: str = "w") -> tuple[float, float]:
        """Densities at z=1 and z=0, linearly extrapolated from the two outermost cells."""
        a = self.w if which == "w" else self.v
        if a.size < 2:
            return float(a[-1]), float(a[0])
        return 1.5 * a[-1] - 0.5 * a[-2], 1.5 * a[0] - 0.5 * a[1]

    def copy(self) -> "DistributionField":
        return DistributionField(self.w.copy(), self.v.copy(), self.time)


@dataclass(frozen=True)
class NormalizedSystem:
    """Coefficients of the fixed-boundary system at one instant.

    ``beta_hat = beta / width**2`` and ``u_hat = u / width`` are in 1/h.
    The drift ``alpha_hat_j(z) = ((z_e - z) * width - j * R * P) / (R * C * width)``
    is evaluated from the representative thermal parameters.  Boundary fluxes are
    in loads/h and ``delta`` (one value per cell) in loads per unit z per hour.
    """

    beta_hat: float
    z_e: float
    width: float
    R: float
    C: float
    P: float
    u_hat: float = 0.0
    sigma_upper: float = 0.0
    sigma_lower: float = 0.0
    delta: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def from_physical(cls, band: Deadband, x_e: float, beta: float, R: float, C: float,
                      P: float, u: float = 0.0, **kw) -> "NormalizedSystem":
        return cls(beta_hat=beta / band.width ** 2, z_e=(x_e - band.lower) / band.width,
                   width=band.width, R=R, C=C, P=P, u_hat=u / band.width, **kw)

    def alpha_hat(self, z, mode: int):
        return ((self.z_e - np.asarray(z)) * self.width - mode * self.R * self.P) / (
            self.R * self.C * self.width)

    def alpha_hat_on(self, z):
        return self.alpha_hat(z, 1)

    def alpha_hat_off(self, z):
        return self.alpha_hat(z, 0)

    def with_control(self, u_hat: float) -> "NormalizedSystem":
        return replace(self, u_hat=u_hat)


def face_velocities(n_cells: int, sys: NormalizedSystem, mode: int) -> np.ndarray:
    """Advection speed ``alpha_hat_j - 2 u_hat`` at the n_cells - 1 interior faces."""
    zf = np.arange(1, n_cells) / n_cells
    return sys.alpha_hat(zf, mode) - 2.0 * sys.u_hat


def interior_fluxes(dens: np.ndarray, vel: np.ndarray, beta_hat: float, dz: float) -> np.ndarray:
    left, right = dens[:-1], dens[1:]
    return -beta_hat * (right - left) / dz + np.where(vel > 0, vel * left, vel * right)


def upwind_values(dens: np.ndarray, vel: np.ndarray) -> np.ndarray:
    return np.where(vel > 0, dens[:-1], dens[1:])


def rhs(field: DistributionField, sys: NormalizedSystem) -> tuple[np.ndarray, np.ndarray]:
    """Semi-discrete time derivatives (dw/dt, dv/dt)."""
    n, dz = field.n_cells, field.dz
    jw = np.empty(n + 1)
    jv = np.empty(n + 1)
    jw[1:-1] = interior_fluxes(field.w, face_velocities(n, sys, 1), sys.beta_hat, dz)
    jv[1:-1] = interior_fluxes(field.v, face_velocities(n, sys, 0), sys.beta_hat, dz)
    jw[0], jw[-1] = -sys.sigma_lower, -sys.sigma_upper
    jv[0], jv[-1] = sys.sigma_lower, sys.sigma_upper
    dw = -(jw[1:] - jw[:-1]) / dz
    dv = -(jv[1:] - jv[:-1]) / dz
    if sys.delta is not None:
        dw = dw + sys.delta
        dv = dv - sys.delta
    return dw, dv


def admissible_dt(field: DistributionField, sys: NormalizedSystem, rate: float = 0.0) -> float:
    """Explicit-Euler stability bound ``0.5 * dz**2 / (2 beta_hat + |a|_max dz)``.

    With a forced-switching ``rate`` the step is also capped at ``0.5 / rate`` so the
    transport and toggling parts together keep every update coefficient nonnegative.
    """
    n, dz = field.n_cells, field.dz
    zf = np.arange(n + 1) / n
    a_max = max(np.max(np.abs(sys.alpha_hat(zf, j) - 2.0 * sys.u_hat)) for j in (0, 1))
    denom = 2.0 * sys.beta_hat + a_max * dz
    if not denom > 0:
        raise InvalidScenario("degenerate system: no diffusion and no advection")
    dt = SAFETY * dz * dz / denom
    return min(dt, SAFETY / rate) if rate > 0 else dt


def fpe_step(field: DistributionField, sys: NormalizedSystem, dt: float, *,
             check_cfl: bool = True, check_positivity: bool = True) -> DistributionField:
    if not dt > 0:
        raise InvalidScenario(f"dt must be positive, got {dt}")
    if check_cfl:
        limit = admissible_dt(field, sys)
        if dt > limit * (1 + 1e-12):
            raise StepSizeError(dt, limit)
    dw, dv = rhs(field, sys)
    w = field.w + dt * dw
    v = field.v + dt * dv
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise NumericFailure(f"non-finite density at t={field.time + dt:.6g} h")
    if check_positivity:
        lo = min(w.min(), v.min())
        if lo < -POSITIVITY_TOL:
            raise PositivityViolation(f"density {lo:.3e} < 0 at t={field.time + dt:.6g} h")
    return DistributionField(w, v, field.time + dt)


def delta_model(field: DistributionField, rate: float) -> np.ndarray:
    """Net OFF->ON flow when every load toggles independently at ``rate`` per hour."""
    if rate < 0:
        raise InvalidScenario("forced-switching rate must be >= 0")
    return rate * (field.v - field.w)


def switching_flux(field: DistributionField, sys: NormalizedSystem, *,
                   absorbing_diffusion: bool = True) -> tuple[float, float]:
    """Boundary fluxes (sigma_upper, sigma_lower) for thermostat switching at the band edges.

    ON loads leaving through z=0 become OFF, OFF loads leaving through z=1 become ON.
    The outflow is the upwind advective flux, plus the ghost-cell diffusive flux of
    a zero-density (absorbing) edge when ``absorbing_diffusion`` is set.
    """
    dz = field.dz
    a_low = float(sys.alpha_hat(0.0, 1)) - 2.0 * sys.u_hat
    a_up = float(sys.alpha_hat(1.0, 0)) - 2.0 * sys.u_hat
    k = 2.0 * sys.beta_hat / dz if absorbing_diffusion else 0.0
    lower = (max(-a_low, 0.0) + k) * field.w[0]
    upper = (max(a_up, 0.0) + k) * field.v[-1]
    return float(upper), float(lower)


class FieldStepper:
    """Array-level explicit stepping for long runs.

    Produces the same update as :func:`fpe_step` but precomputes the parts of
    the drift that do not change, so only the scalar ``z_e`` and ``u_hat`` are
    supplied per step.  Use it when the same grid and thermal parameters are
    stepped many thousands of times.
    """

    def __init__(self, n_cells: int, beta: float, width: float, R: float, C: float, P: float):
        self.n, self.dz, self.width = n_cells, 1.0 / n_cells, width
        self.beta_hat = beta / width ** 2
        self.inv = 1.0 / (R * C * width)
        zf = np.arange(1, n_cells) / n_cells
        self.base_on = (-zf * width - R * P) * self.inv
        self.base_off = -zf * width * self.inv
        self.low_on = -R * P * self.inv       # ON drift at z=0 without the z_e term
        self.up_off = -width * self.inv       # OFF drift at z=1 without the z_e term

    def _shift(self, z_e: float, u_hat: float) -> float:
        return z_e * self.width * self.inv - 2.0 * u_hat

    def admissible_dt(self, z_e: float, u_hat: float) -> float:
        s = self._shift(z_e, u_hat)
        a_max = max(abs(s), abs(s + self.low_on), abs(s + self.up_off), abs(s + self.low_on + self.up_off))
        return SAFETY * self.dz ** 2 / (2.0 * self.beta_hat + a_max * self.dz)

    def switching_flux(self, w, v, z_e: float, u_hat: float, absorbing_diffusion: bool = True):
        s = self._shift(z_e, u_hat)
        k = 2.0 * self.beta_hat / self.dz if absorbing_diffusion else 0.0
        lower = (max(-(s + self.low_on), 0.0) + k) * w[0]
        upper = (max(s + self.up_off, 0.0) + k) * v[-1]
        return float(upper), float(lower)

    def step(self, w, v, z_e: float, u_hat: float, dt: float, sigma_upper: float = 0.0,
             sigma_lower: float = 0.0, delta=None):
        s = self._shift(z_e, u_hat)
        bh, dz = self.beta_hat, self.dz
        vw = self.base_on + s
        vv = self.base_off + s
        jw = -bh * (w[1:] - w[:-1]) / dz + np.where(vw > 0, vw * w[:-1], vw * w[1:])
        jv = -bh * (v[1:] - v[:-1]) / dz + np.where(vv > 0, vv * v[:-1], vv * v[1:])
        jw = np.concatenate(((-sigma_lower,), jw, (-sigma_upper,)))
        jv = np.concatenate(((sigma_lower,), jv, (sigma_upper,)))
        dw = -(jw[1:] - jw[:-1]) / dz
        dv = -(jv[1:] - jv[:-1]) / dz
        if delta is not None:
            dw = dw + delta
            dv = dv - delta
        return w + dt * dw, v + dt * dv

    def advance(self, w, v, *, lower: float, u: float, x_e0: float, x_e1: float, duration: float,
                sigma_mode: int = 0, sigma_amplitude: float = 0.0, sigma_period: float = 1.0,
                t0: float = 0.0, rate: float = 0.0, check_positivity: bool = True):
        """Advance ``duration`` hours in equal sub-steps under the stability bound.

        The band lower edge moves at ``u`` (degC/h) and the ambient varies
        linearly from ``x_e0`` to ``x_e1``.  ``sigma_mode`` selects the boundary
        fluxes: 0 none, 1 ``sigma_amplitude * sin(2 pi t / sigma_period)`` on
        both edges, 2 thermostat outflow (:meth:`switching_flux`).

        Returns ``(w, v, lower, flows)`` where ``flows`` holds the time
        integrals (int delta, int |delta|, int sigma_upper, int sigma_lower,
        int |sigma_upper|, int |sigma_lower|) over the interval.
        """
        u_hat = u / self.width
        z0 = (x_e0 - lower) / self.width
        z1 = (x_e1 - lower - u * duration) / self.width
        adm = min(self.admissible_dt(z0, u_hat), self.admissible_dt(z1, u_hat))
        if rate > 0:
            adm = min(adm, SAFETY / rate)
        n_sub = max(1, int(np.ceil(duration / adm * (1 - 1e-12))))
        w, v, lower, flows, lo = _advance_kernel(
            np.array(w, dtype=float), np.array(v, dtype=float), self.base_on, self.base_off,
            self.low_on, self.up_off, self.width * self.inv, self.beta_hat, self.dz, self.width,
            lower, u, x_e0, x_e1, duration / n_sub, n_sub, sigma_mode, sigma_amplitude,
            2.0 * np.pi / sigma_period, t0, rate, check_positivity)
        if not np.isfinite(lo):
            raise NumericFailure(f"non-finite density near t={t0:.6g} h")
        if check_positivity and lo < -POSITIVITY_TOL:
            raise PositivityViolation(f"density {lo:.3e} < 0 near t={t0:.6g} h")
        return w, v, lower, flows


@njit(cache=True)
def _advance_kernel(w, v, base_on, base_off, low_on, up_off, ze_scale, beta_hat, dz, width,
                    lower, u, x_e0, x_e1, h, n_sub, sigma_mode, amp, omega, t0, rate, check_pos):
    n = w.size
    jw = np.empty(n + 1)
    jv = np.empty(n + 1)
    flows = np.zeros(6)
    lo = np.inf
    u_hat = u / width
    k_abs = 2.0 * beta_hat / dz
    for j in range(n_sub):
        z_e = (x_e0 + (x_e1 - x_e0) * (j / n_sub) - lower) / width
        s = z_e * ze_scale - 2.0 * u_hat
        if sigma_mode == 0:
            su = 0.0
            sl = 0.0
        elif sigma_mode == 1:
            su = amp * np.sin(omega * (t0 + j * h))
            sl = su
        else:
            sl = (max(-(s + low_on), 0.0) + k_abs) * w[0]
            su = (max(s + up_off, 0.0) + k_abs) * v[n - 1]
        jw[0] = -sl
        jw[n] = -su
        jv[0] = sl
        jv[n] = su
        for i in range(n - 1):
            vw = base_on[i] + s
            vv = base_off[i] + s
            jw[i + 1] = -beta_hat * (w[i + 1] - w[i]) / dz + (vw * w[i] if vw > 0 else vw * w[i + 1])
            jv[i + 1] = -beta_hat * (v[i + 1] - v[i]) / dz + (vv * v[i] if vv > 0 else vv * v[i + 1])
        dsum = 0.0
        dabs = 0.0
        for i in range(n):
            dw = -(jw[i + 1] - jw[i]) / dz
            dv = -(jv[i + 1] - jv[i]) / dz
            if rate > 0.0:
                d = rate * (v[i] - w[i])
                dw = dw + d
                dv = dv - d
                dsum += d
                dabs += abs(d)
            w[i] = w[i] + h * dw
            v[i] = v[i] + h * dv
        flows[0] += h * (dsum * dz)
        flows[1] += h * (dabs * dz)
        flows[2] += h * su
        flows[3] += h * sl
        flows[4] += h * abs(su)
        flows[5] += h * abs(sl)
        lower += u * h
        if check_pos:
            for i in range(n):
                m = min(w[i], v[i])
                if m < lo or m != m:
                    lo = m
            if lo < -1e-12 or not np.isfinite(lo):
                break
    if not check_pos:
        lo = 0.0
    return w, v, lower, flows, lo
