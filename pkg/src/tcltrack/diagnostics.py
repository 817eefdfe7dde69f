"""Post-hoc checks on logged runs.

The checks cover mass bookkeeping and the L1 envelopes of the densities.  They
also evaluate the disturbance aggregate Gamma against the regulation-error envelope.

Every function here is a pure function of its inputs so reports can be replayed
from saved logs.  None of these quantities is fed back to the controller.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .deadband import Deadband
from .fpe import DistributionField

CONSERVATION_TOL = 1e-10


@dataclass
class ConservationLedger:
    """Time-integrated switching flows since t=0 (all in loads)."""

    w0: float
    v0: float
    cum_delta: float = 0.0
    cum_sigma_upper: float = 0.0
    cum_sigma_lower: float = 0.0
    abs_delta: float = 0.0
    abs_sigma_upper: float = 0.0
    abs_sigma_lower: float = 0.0

    @classmethod
    def start(cls, field: DistributionField) -> "ConservationLedger":
        return cls(field.mass_on(), field.mass_off())

    @property
    def n0(self) -> float:
        return self.w0 + self.v0

    def record(self, dt: float, delta: np.ndarray | None, dz: float,
               sigma_upper: float = 0.0, sigma_lower: float = 0.0) -> None:
        if delta is not None:
            self.cum_delta += dt * float(np.sum(delta) * dz)
            self.abs_delta += dt * float(np.sum(np.abs(delta)) * dz)
        self.cum_sigma_upper += dt * sigma_upper
        self.cum_sigma_lower += dt * sigma_lower
        self.abs_sigma_upper += dt * abs(sigma_upper)
        self.abs_sigma_lower += dt * abs(sigma_lower)

    def add_flows(self, flows) -> None:
        """Add pre-integrated flows (int delta, int |delta|, int su, int sl, int |su|, int |sl|)."""
        self.cum_delta += float(flows[0])
        self.abs_delta += float(flows[1])
        self.cum_sigma_upper += float(flows[2])
        self.cum_sigma_lower += float(flows[3])
        self.abs_sigma_upper += float(flows[4])
        self.abs_sigma_lower += float(flows[5])


def check_conservation(ledger: ConservationLedger, field: DistributionField) -> dict:
    """Residuals of the ON/OFF mass identities and of the total, relative to N(0)."""
    net = ledger.cum_delta + ledger.cum_sigma_upper - ledger.cum_sigma_lower
    scale = abs(ledger.n0) or 1.0
    res_w = (field.mass_on() - (ledger.w0 + net)) / scale
    res_v = (field.mass_off() - (ledger.v0 - net)) / scale
    res_total = (field.total_mass() - ledger.n0) / scale
    worst = max(abs(res_w), abs(res_v), abs(res_total))
    return {"res_w": res_w, "res_v": res_v, "res_total": res_total,
            "passed": bool(worst <= CONSERVATION_TOL)}


def field_l1(field: DistributionField) -> tuple[float, float]:
    return float(np.sum(np.abs(field.w)) * field.dz), float(np.sum(np.abs(field.v)) * field.dz)


def disturbance_envelope(rate: float, horizon: float, n_agg: float,
                         sigma_upper_abs: float = 0.0, sigma_lower_abs: float = 0.0) -> tuple[float, float]:
    """Bounds (M, M') on set-integrals of delta and of the boundary fluxes.

    With toggling at ``rate`` the source satisfies |delta| <= rate (w + v), so any
    space-time set integral is at most ``rate * horizon * N``.  M' is the larger
    time-integrated absolute boundary flux.
    """
    return rate * horizon * abs(n_agg), max(sigma_upper_abs, sigma_lower_abs)


def l1_bounds(w_l1, v_l1, M: float, M_prime: float, tol: float = CONSERVATION_TOL) -> dict:
    """Check ||w(t)|| <= ||w(0)|| + 2M + 2M' (and the same for v) at every sample."""
    w_l1, v_l1 = np.asarray(w_l1, dtype=float), np.asarray(v_l1, dtype=float)
    cap_w = w_l1[0] + 2 * M + 2 * M_prime
    cap_v = v_l1[0] + 2 * M + 2 * M_prime
    slack = tol * max(1.0, w_l1[0] + v_l1[0])
    viol_w = int(np.sum(w_l1 > cap_w + slack))
    viol_v = int(np.sum(v_l1 > cap_v + slack))
    return {"cap_w": float(cap_w), "cap_v": float(cap_v), "max_w": float(w_l1.max()),
            "max_v": float(v_l1.max()), "violations": viol_w + viol_v,
            "passed": viol_w + viol_v == 0}


def compute_gamma(field: DistributionField, band: Deadband, a: float, b: float,
                  delta: np.ndarray | None = None, sigma_upper: float = 0.0, sigma_lower: float = 0.0,
                  P: float = 14.0, eta: float = 2.5) -> float:
    """Gamma = (P/eta) [(a upper + b) sigma_upper - (a lower + b) sigma_lower + int (a x + b) delta dx]."""
    g = (a * band.upper + b) * sigma_upper - (a * band.lower + b) * sigma_lower
    if delta is not None:
        x = band.lower + field.centers * band.width
        g += float(np.sum((a * x + b) * delta) * field.dz)
    return P / eta * g


def verify_error_bound(t, e, gamma, k0: float, eps: float = 1e-6, rel_tol: float = 0.01) -> dict:
    """Check |e(t)| against the exponential envelope and e(t) against the convolution formula.

    The convolution is evaluated recursively with the trapezoidal rule on the
    logged samples.  The cross-check error is reported relative to max |e|.
    """
    t, e, gamma = (np.asarray(a, dtype=float) for a in (t, e, gamma))
    t = t - t[0]
    g_inf = float(np.max(np.abs(gamma))) if gamma.size else 0.0
    decay = np.exp(-k0 * t)
    bound = abs(e[0]) * decay + g_inf / k0 * (1.0 - decay)
    excess = np.abs(e) - bound
    conv = np.zeros_like(t)
    for k in range(1, t.size):
        h = t[k] - t[k - 1]
        q = np.exp(-k0 * h)
        conv[k] = conv[k - 1] * q + 0.5 * h * (gamma[k - 1] * q + gamma[k])
    closed = e[0] * decay + conv
    scale = max(float(np.max(np.abs(e))), 1e-300)
    cross = float(np.max(np.abs(e - closed)) / scale)
    bound_ok = bool(np.all(excess <= eps))
    return {"gamma_inf": g_inf, "max_excess": float(np.max(excess)), "bound_passed": bound_ok,
            "closed_form_rel_err": cross, "closed_form_passed": bool(cross <= rel_tol),
            "passed": bound_ok and cross <= rel_tol}


def run_report(data: dict, meta: dict, *, error_eps: float = 1e-6) -> dict:
    """Pass/fail for every invariant that can be replayed from a logged run.

    ``data`` maps column names to arrays (the CSV columns); ``meta`` needs
    ``k0``, ``M`` and ``M_prime``.
    """
    cols = {k: np.asarray(v, dtype=float) for k, v in data.items()}
    t = cols["t"]
    checks = {}
    finite = all(np.all(np.isfinite(v)) for v in cols.values())
    checks["finite_rows"] = {"passed": bool(finite)}
    checks["monotone_time"] = {"passed": bool(t.size < 2 or np.all(np.diff(t) > 0))}
    worst = {k: float(np.max(np.abs(cols[k]))) if t.size else 0.0
             for k in ("cons_res_w", "cons_res_v", "cons_res_total")}
    checks["mass_conservation"] = dict(worst, passed=bool(max(worst.values(), default=0.0) <= CONSERVATION_TOL))
    if t.size:
        checks["l1_bounds"] = l1_bounds(cols["w_l1"], cols["v_l1"], meta["M"], meta["M_prime"])
        checks["error_bound"] = verify_error_bound(t, cols["e"], cols["gamma"], meta["k0"], eps=error_eps)
        over = cols["band_excess"] - cols["band_tol"]
        checks["deadband"] = {"max_over": float(np.max(over)), "violations": int(np.sum(over > 1e-12)),
                              "passed": bool(np.all(over <= 1e-12))}
    failing = [k for k, v in checks.items() if not v["passed"]]
    return {"checks": checks, "failing": failing, "passed": not failing}
