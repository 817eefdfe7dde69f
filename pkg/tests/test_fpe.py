import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import erf

from tcltrack.deadband import Deadband, denormalize, normalize
from tcltrack.errors import InvalidScenario, PositivityViolation, StepSizeError
from tcltrack.fpe import (DistributionField, FieldStepper, NormalizedSystem, admissible_dt, delta_model,
                          fpe_step, rhs, switching_flux)

import mms_oracle


def table_system(band=Deadband(19.75, 0.5), x_e=28.0, u=0.0, **kw):
    return NormalizedSystem.from_physical(band, x_e, 0.1, 2.0, 10.0, 14.0, u=u, **kw)


def no_drift_system(beta_hat=0.4, **kw):
    # infinite capacitance switches the thermal drift off exactly
    return NormalizedSystem(beta_hat, 0.5, 0.5, 2.0, math.inf, 14.0, **kw)


def test_normalize_examples_and_round_trip(band, rng):
    assert normalize(19.75, band) == 0.0
    assert normalize(20.25, band) == 1.0
    x = rng.uniform(15, 25, 1000)
    np.testing.assert_allclose(denormalize(normalize(x, band), band), x, rtol=0, atol=1e-14 * 25)


def test_zero_field_stays_zero():
    f = fpe_step(DistributionField.zeros(40), table_system(), 1e-5)
    assert np.all(f.w == 0) and np.all(f.v == 0)


field_arrays = arrays(np.float64, 30, elements=st.floats(0, 1e4))


@settings(max_examples=60, deadline=None)
@given(w=field_arrays, v=field_arrays, su=st.floats(-500, 500), sl=st.floats(-500, 500),
       rate=st.floats(0, 5), u=st.floats(-3, 3))
def test_one_step_mass_identity(w, v, su, sl, rate, u):
    f = DistributionField(w, v)
    delta = delta_model(f, rate)
    sys = table_system(u=u, sigma_upper=su, sigma_lower=sl, delta=delta)
    dt = admissible_dt(f, sys)
    g = fpe_step(f, sys, dt, check_positivity=False)
    scale = max(1.0, f.total_mass(), dt * (abs(su) + abs(sl) + np.sum(np.abs(delta)) * f.dz))
    d_sum = float(np.sum(delta) * f.dz)
    assert abs((g.mass_on() - f.mass_on()) - dt * (su - sl + d_sum)) <= 1e-12 * scale
    assert abs((g.mass_off() - f.mass_off()) + dt * (su - sl + d_sum)) <= 1e-12 * scale
    assert abs(g.total_mass() - f.total_mass()) <= 1e-12 * scale


def _gaussian_cell_averages(n, mean, var):
    edges = np.linspace(0, 1, n + 1)
    cdf = 0.5 * (1 + erf((edges - mean) / math.sqrt(2 * var)))
    return np.diff(cdf) * n


def test_heat_kernel_convergence():
    """Pure diffusion of a narrow Gaussian against the analytic kernel, before it reaches the walls."""
    var0, t_end, beta_hat = 0.002, 0.005, 0.4
    errs = []
    cells = (50, 100, 200)
    for n in cells:
        f = DistributionField(_gaussian_cell_averages(n, 0.5, var0), np.zeros(n))
        sys = no_drift_system(beta_hat)
        steps = int(math.ceil(t_end / admissible_dt(f, sys)))
        for _ in range(steps):
            f = fpe_step(f, sys, t_end / steps)
        exact = _gaussian_cell_averages(n, 0.5, var0 + 2 * beta_hat * t_end)
        errs.append(math.sqrt(np.sum((f.w - exact) ** 2) / n))
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(2) for i in range(2)]
    assert errs[0] > errs[1] > errs[2]
    assert min(orders) >= 0.9


def test_manufactured_solution_order():
    errs, orders = mms_oracle.observed_orders()
    assert errs[0] > errs[1] > errs[2]
    assert min(orders) >= 0.9


def test_admissible_dt_examples():
    f = DistributionField.zeros(100)
    sys = no_drift_system(0.1 / 0.5 ** 2)
    assert admissible_dt(f, sys) == pytest.approx(6.25e-5, rel=1e-14)
    ratio = admissible_dt(DistributionField.zeros(200), sys) / admissible_dt(f, sys)
    assert abs(ratio - 0.25) <= 1e-12
    with pytest.raises(InvalidScenario):
        admissible_dt(f, no_drift_system(0.0))
    assert admissible_dt(f, sys, rate=1e5) == pytest.approx(0.5e-5)


def test_step_size_error_names_admissible_dt():
    f = DistributionField.uniform(50, 1.0, 1.0)
    sys = table_system()
    limit = admissible_dt(f, sys)
    with pytest.raises(StepSizeError) as exc:
        fpe_step(f, sys, 2 * limit)
    assert exc.value.admissible == pytest.approx(limit)
    assert f"{limit:.6g}" in str(exc.value)


def test_positivity_violation_detected():
    f = DistributionField(np.r_[0.0, np.ones(19)], np.ones(20))
    sys = table_system(sigma_lower=1e3)   # strong outflow through an empty bottom cell
    with pytest.raises(PositivityViolation):
        fpe_step(f, sys, admissible_dt(f, sys))


@settings(max_examples=60, deadline=None)
@given(w=field_arrays, v=field_arrays, rate=st.floats(0, 1e4), u=st.floats(-5, 5), x_e=st.floats(28, 32))
def test_nonnegativity_preserved(w, v, rate, u, x_e):
    f = DistributionField(w, v)
    sys = table_system(x_e=x_e, u=u, delta=delta_model(f, rate))
    g = fpe_step(f, sys, admissible_dt(f, sys, rate=rate))
    assert min(g.w.min(), g.v.min()) >= -1e-12 * max(1.0, w.max(), v.max())


def test_delta_model_properties(rng):
    w = rng.uniform(0, 10, 25)
    f = DistributionField(w, w.copy())
    assert np.all(delta_model(f, 3.0) == 0)
    g = DistributionField(w, rng.uniform(0, 10, 25))
    assert np.all(delta_model(g, 0.0) == 0)
    d = delta_model(g, 2.0)
    assert np.all(d[g.w > g.v] < 0)
    assert np.sum(d) * g.dz == pytest.approx(2.0 * (g.mass_off() - g.mass_on()), rel=1e-12)
    with pytest.raises(InvalidScenario):
        delta_model(g, -1.0)


def test_frame_equivalence_under_band_shift():
    """Moving the band at u while shifting the ambient by the same amount leaves the
    normalized drift unchanged: the two runs agree to round-off."""
    f = DistributionField(np.linspace(1, 2, 40), np.linspace(2, 1, 40))
    s1 = table_system(Deadband(19.75, 0.5), 28.0, u=0.0)
    s2 = table_system(Deadband(20.75, 0.5), 29.0, u=0.0)
    np.testing.assert_allclose(rhs(f, s1)[0], rhs(f, s2)[0], rtol=1e-13, atol=1e-12)
    # a constant u_hat offset equals a constant shift in the advection speed
    s3 = table_system(u=0.4)
    s4 = NormalizedSystem(s1.beta_hat, s1.z_e - 2 * (0.4 / 0.5) * s1.R * s1.C, 0.5, 2.0, 10.0, 14.0)
    np.testing.assert_allclose(rhs(f, s3)[0], rhs(f, s4)[0], rtol=1e-12, atol=1e-10)


@pytest.mark.parametrize("sigma_mode", [0, 1, 2])
def test_stepper_kernel_matches_reference_step(sigma_mode):
    n, width = 60, 0.5
    rng = np.random.default_rng(sigma_mode)
    w, v = rng.uniform(50, 150, n), rng.uniform(50, 150, n)
    st_ = FieldStepper(n, 0.1, width, 2.0, 10.0, 14.0)
    lower, u, x_e0, x_e1, dur, rate = 19.75, 0.7, 28.0, 28.4, 0.01, 0.5
    w1, v1, lower1, flows = st_.advance(w, v, lower=lower, u=u, x_e0=x_e0, x_e1=x_e1, duration=dur,
                                        sigma_mode=sigma_mode, sigma_amplitude=30.0, sigma_period=0.05,
                                        rate=rate)
    # replay with the reference array stepper using the same sub-step count
    z0 = (x_e0 - lower) / width
    z1 = (x_e1 - lower - u * dur) / width
    adm = min(st_.admissible_dt(z0, u / width), st_.admissible_dt(z1, u / width), 0.5 / rate)
    n_sub = max(1, int(np.ceil(dur / adm * (1 - 1e-12))))
    h = dur / n_sub
    wr, vr, lo = w.copy(), v.copy(), lower
    for j in range(n_sub):
        x_e = x_e0 + (x_e1 - x_e0) * (j / n_sub)
        z_e = (x_e - lo) / width
        if sigma_mode == 0:
            su = sl = 0.0
        elif sigma_mode == 1:
            su = sl = 30.0 * math.sin(2 * math.pi / 0.05 * j * h)
        else:
            f = DistributionField(wr, vr)
            su, sl = switching_flux(f, NormalizedSystem(0.1 / width ** 2, z_e, width, 2.0, 10.0, 14.0, u / width))
        wr, vr = st_.step(wr, vr, z_e, u / width, h, su, sl, rate * (vr - wr))
        lo += u * h
    np.testing.assert_allclose(w1, wr, rtol=1e-13, atol=1e-10)
    np.testing.assert_allclose(v1, vr, rtol=1e-13, atol=1e-10)
    assert lower1 == pytest.approx(lower + u * dur, abs=1e-12)
    # mass bookkeeping of the returned flows
    dz = 1 / n
    net = flows[0] + flows[2] - flows[3]
    assert np.sum(w1) * dz - np.sum(w) * dz == pytest.approx(net, abs=1e-9)


def test_stepper_matches_fpe_step():
    n = 30
    rng = np.random.default_rng(0)
    f = DistributionField(rng.uniform(0, 5, n), rng.uniform(0, 5, n))
    band = Deadband(19.75, 0.5)
    sys = table_system(band, 29.0, u=-0.6, sigma_upper=3.0, sigma_lower=-1.0, delta=delta_model(f, 0.8))
    dt = admissible_dt(f, sys)
    g = fpe_step(f, sys, dt)
    st_ = FieldStepper(n, 0.1, 0.5, 2.0, 10.0, 14.0)
    w, v = st_.step(f.w, f.v, sys.z_e, sys.u_hat, dt, 3.0, -1.0, delta_model(f, 0.8))
    np.testing.assert_allclose(g.w, w, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(g.v, v, rtol=1e-14, atol=1e-14)


def test_switching_flux_moves_loads_between_species():
    f = DistributionField.uniform(20, 100.0, 100.0)
    sys = table_system(x_e=30.0)
    su, sl = switching_flux(f, sys)
    assert su > 0 and sl > 0     # OFF loads leave the top, ON loads leave the bottom
    s2 = table_system(x_e=30.0, sigma_upper=su, sigma_lower=sl)
    g = fpe_step(f, s2, admissible_dt(f, s2))
    assert g.total_mass() == pytest.approx(f.total_mass(), rel=1e-14)
