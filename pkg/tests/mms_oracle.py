"""Manufactured-solution oracle for the normalized ON/OFF system.

The ON density is prescribed; the OFF density carries two free time functions
that are solved so its boundary fluxes are the negatives of the ON ones, as the
switching structure requires.  Forcing terms are derived symbolically.
"""
import numpy as np
import sympy as sp

from tcltrack.fpe import DistributionField, NormalizedSystem, admissible_dt, rhs

BETA_HAT = 0.4
Z_E, WIDTH, R, C, P = 16.5, 0.5, 2.0, 10.0, 14.0
U_HAT = 0.3


def _build():
    z, t = sp.symbols("z t")
    a1 = ((Z_E - z) * WIDTH - R * P) / (R * C * WIDTH) - 2 * U_HAT
    a0 = ((Z_E - z) * WIDTH) / (R * C * WIDTH) - 2 * U_HAT
    w = 2 + sp.sin(sp.pi * z / 2 + t) * sp.exp(-t / 2)
    jw = -(BETA_HAT * sp.diff(w, z) - a1 * w)
    A, B = sp.symbols("A B")
    v_ab = 3 + A * z ** 2 + B * (1 - z) ** 2
    jv_ab = -(BETA_HAT * sp.diff(v_ab, z) - a0 * v_ab)
    sol = sp.solve([jv_ab.subs(z, 0) + jw.subs(z, 0), jv_ab.subs(z, 1) + jw.subs(z, 1)], [A, B], dict=True)[0]
    v = v_ab.subs(sol)
    jv = -(BETA_HAT * sp.diff(v, z) - a0 * v)
    fw = sp.diff(w, t) + sp.diff(jw, z)
    fv = sp.diff(v, t) + sp.diff(jv, z)
    lam = lambda e: sp.lambdify((z, t), e, "numpy")
    return lam(w), lam(v), lam(fw), lam(fv), lam(jw)


W, V, FW, FV, JW = _build()


def system(sigma_upper=0.0, sigma_lower=0.0) -> NormalizedSystem:
    return NormalizedSystem(BETA_HAT, Z_E, WIDTH, R, C, P, u_hat=U_HAT,
                            sigma_upper=sigma_upper, sigma_lower=sigma_lower)


def l2_error(n_cells: int, t_end: float = 0.1) -> float:
    """Discrete L2 error of both species at ``t_end`` after explicit stepping with forcing."""
    zc = (np.arange(n_cells) + 0.5) / n_cells
    f = DistributionField(W(zc, 0.0), V(zc, 0.0))
    dt0 = admissible_dt(f, system())
    steps = int(np.ceil(t_end / dt0))
    dt = t_end / steps
    for k in range(steps):
        t = k * dt
        # boundary faces carry J_w(0) = -sigma_lower and J_w(1) = -sigma_upper
        sys = system(sigma_upper=-float(JW(1.0, t)), sigma_lower=-float(JW(0.0, t)))
        dw, dv = rhs(f, sys)
        f = DistributionField(f.w + dt * (dw + FW(zc, t)), f.v + dt * (dv + FV(zc, t)), t + dt)
    ew = f.w - W(zc, t_end)
    ev = f.v - V(zc, t_end)
    return float(np.sqrt(np.sum(ew ** 2 + ev ** 2) / n_cells))


def observed_orders(cells=(50, 100, 200), t_end: float = 0.1):
    errs = [l2_error(n, t_end) for n in cells]
    orders = [np.log(errs[i] / errs[i + 1]) / np.log(cells[i + 1] / cells[i]) for i in range(len(cells) - 1)]
    return errs, orders
