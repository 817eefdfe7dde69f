"""Closed-loop orchestration with CSV logging.

Three modes share one loop:

``pde``
    The Fokker-Planck field is the plant and the controller reads it directly.
``agents``
    The loads are the plant.  The controller runs on an internal Fokker-Planck
    model initialised from the load histogram; the band-centre reference
    ``x_ref`` is integrated from the smoothed model control and sent to the loads.
``coupled``
    The controller reads the load histogram every period; a Fokker-Planck
    field is stepped alongside with the same band motion for comparison.
"""
from __future__ import annotations

import csv
import json
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .control import (AggregateModel, ControllerState, advance_reference, compute_control,
                      linearizing_control, offset_from_setpoint, one_step_control, smooth_control, stabilizer,
                      weighted_output)
from .deadband import Deadband
from .diagnostics import ConservationLedger, check_conservation, compute_gamma, disturbance_envelope, field_l1
from .errors import ControlSingularity, TclTrackError
from .fpe import DistributionField, FieldStepper, delta_model, switching_flux
from .population import Population, aggregate_power, build_population, duty_cycle_power, estimate_distribution

COLUMNS = (
    ("t", "h"), ("x_e", "degC"), ("x_p", "degC"), ("xp_dot", "degC/h"), ("x_ref", "degC"),
    ("band_lower_model", "degC"), ("u_raw", "degC/h"), ("u_applied", "degC/h"),
    ("y", "kW degC"), ("y_d", "kW degC"), ("e", "kW degC"), ("y_plant", "kW degC"),
    ("power", "1"), ("power_model", "1"), ("power_ref", "1"),
    ("n_agg", "loads"), ("w_l1", "loads"), ("v_l1", "loads"), ("gamma", "kW degC/h"),
    ("cons_res_w", "1"), ("cons_res_v", "1"), ("cons_res_total", "1"),
    ("band_excess", "degC"), ("band_tol", "degC"),
)
COLUMN_NAMES = tuple(c for c, _ in COLUMNS)


@dataclass
class RunLog:
    data: dict[str, np.ndarray] = field(default_factory=lambda: {c: np.zeros(0) for c in COLUMN_NAMES})
    temp_samples: np.ndarray | None = None      # rows x sampled loads
    sample_ids: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.data["t"].size)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]


class _Recorder:
    def __init__(self):
        self.rows: list[tuple] = []
        self.temps: list[np.ndarray] = []

    def to_log(self, sample_ids, meta) -> RunLog:
        arr = np.array(self.rows, dtype=float).reshape(-1, len(COLUMN_NAMES))
        data = {c: arr[:, i].copy() for i, c in enumerate(COLUMN_NAMES)}
        temps = np.array(self.temps) if sample_ids is not None else None
        return RunLog(data, temps, sample_ids, meta)


def _sigma(cfg: ScenarioConfig, t: float, fld: DistributionField, sys) -> tuple[float, float]:
    d = cfg.disturbance
    if d.sigma_kind == "zero":
        return 0.0, 0.0
    if d.sigma_kind == "sin":
        s = d.sigma_amplitude * math.sin(2.0 * math.pi * t / d.sigma_period)
        return s, s
    return switching_flux(fld, sys)


def _band_tolerance(pop: Population, x_e: float, band: Deadband, dt: float, dx_ref: float) -> tuple[float, float]:
    """(largest distance of any load outside ``band``, one period of worst drift plus band motion)."""
    excess = float(np.max(np.maximum(np.maximum(band.lower - pop.temp, pop.temp - band.upper), 0.0)))
    tau = pop.R * pop.C
    drift = max(float(np.max(np.abs(x_e - x - m * pop.R * pop.P) / tau))
                for x in (band.lower, band.upper) for m in (0.0, 1.0))
    return excess, dt * drift + abs(dx_ref)


def reference_power(cfg: ScenarioConfig, pop: Population | None, x_e: float, x_p: float, xp_dot: float) -> float:
    """Normalised power a population needs to keep its band centred on the moving set-point."""
    if pop is None:
        m = cfg.model
        return duty_cycle_power(x_e, x_p, xp_dot, m.R, m.C, m.P, m.eta)
    return duty_cycle_power(x_e, x_p, xp_dot, pop.R, pop.C, pop.P, pop.eta)


def run_scenario(cfg: ScenarioConfig) -> RunLog:
    """Run one scenario and return its log.

    On any package error the partial log is attached to the exception as
    ``partial_log`` before it propagates.
    """
    rec = _Recorder()
    meta: dict = {"config": cfg.to_dict()}
    sample_ids = None
    try:
        return _run(cfg, rec, meta)
    except (TclTrackError, FloatingPointError) as exc:
        sample_ids = meta.get("sample_ids")
        meta["aborted"] = f"{type(exc).__name__}: {exc}"
        exc.partial_log = rec.to_log(None if sample_ids is None else np.asarray(sample_ids), meta)
        raise


def _run(cfg: ScenarioConfig, rec: _Recorder, meta: dict) -> RunLog:
    wall0 = _time.perf_counter()
    mp, sv, dist = cfg.model, cfg.solver, cfg.disturbance
    model = AggregateModel(mp.beta, mp.R, mp.C, mp.P, mp.eta)
    sched = cfg.schedule.build(cfg.horizon)
    a = cfg.control.a
    width = mp.width
    band0 = Deadband.centered(cfg.schedule.x0, width)
    n = cfg.population.n
    ctrl = cfg.control.controller(n)
    uses_agents = cfg.mode in ("agents", "coupled")

    pop = None
    if uses_agents:
        pop = build_population(n, cfg.population.heterogeneity(), band0, cfg.population.seed)
        fld = estimate_distribution(pop, band0, sv.n_cells)
        k = min(cfg.n_temp_samples, n)
        sample_ids = np.sort(np.random.default_rng([cfg.population.seed, 7]).choice(n, k, replace=False))
        meta["sample_ids"] = sample_ids.tolist()
    else:
        fld = DistributionField.uniform(sv.n_cells, 0.5 * n, 0.5 * n)
        sample_ids = None
    norm_const = float(np.sum(pop.power_weights)) if pop is not None else n * mp.P / mp.eta
    meta["power_normalization_kW"] = norm_const

    dt_c = sv.ctrl_dt
    step_counter = 0

    stepper = FieldStepper(sv.n_cells, mp.beta, width, mp.R, mp.C, mp.P)

    sigma_mode = {"zero": 0, "sin": 1, "switching": 2}[dist.sigma_kind]

    def step_pde(fld, lower, t0, u_pde, record):
        """Advance the field over one control period with the band moving at u_pde."""
        w, v, lower, flows = stepper.advance(
            fld.w, fld.v, lower=lower, u=u_pde, x_e0=cfg.ambient(max(t0, 0.0)),
            x_e1=cfg.ambient(max(t0 + dt_c, 0.0)), duration=dt_c, sigma_mode=sigma_mode,
            sigma_amplitude=dist.sigma_amplitude, sigma_period=dist.sigma_period, t0=t0,
            rate=dist.rate, check_positivity=sv.check_positivity)
        if record is not None:
            record.add_flows(flows)
        return DistributionField(w, v, t0 + dt_c), lower

    # open-loop settling with the band held at its initial position
    lower_m = band0.lower
    n_spin = int(round(sv.spinup_h / dt_c))
    for k in range(n_spin):
        t0 = (k - n_spin) * dt_c
        fld, lower_m = step_pde(fld, lower_m, t0, 0.0, None)
        if pop is not None:
            pop.step(cfg.ambient(0.0), dt_c, band0, rate=dist.rate, noise=cfg.population.noise,
                     seed=cfg.population.seed, step_index=step_counter)
        step_counter += 1
    fld.time = 0.0

    ledger = ConservationLedger.start(fld)
    state = ControllerState(x_ref=cfg.schedule.x0, smoothing_window=ctrl.smoothing_window)
    n_steps = int(round(cfg.horizon / dt_c))
    y_d = None
    u_raw = 0.0
    x_ref_prev = state.x_ref
    singular = 0
    saturated = 0

    for k in range(n_steps + 1):
        t = k * dt_c
        x_e = cfg.ambient(t)
        x_p, xp_dot, _ = sched.derivatives(min(t, cfg.horizon), order=2)
        b, b_dot = offset_from_setpoint(a, x_p, xp_dot)
        band_m = Deadband(lower_m, width)
        band_a = Deadband.centered(state.x_ref, width)

        if cfg.mode == "coupled":
            meas, meas_band = estimate_distribution(pop, band_a, sv.n_cells, t), band_a
        else:
            meas, meas_band = fld, band_m
        y = weighted_output(meas, meas_band, a, b, mp.P, mp.eta)
        if y_d is None:
            y_d = y - cfg.initial_error if cfg.y_d == "initial" else float(cfg.y_d)
        e = y - y_d

        if cfg.open_loop:
            u_raw = 0.0
        else:
            phi = stabilizer(e, 0.0, ctrl.k0)
            try:
                if cfg.control.linearization == "one_step":
                    sys_m = model.system(meas_band, x_e, 0.0)
                    t_next = min(t + dt_c, cfg.horizon)
                    b_next, _ = offset_from_setpoint(a, *sched.derivatives(t_next, order=1))
                    u_raw = one_step_control(meas, sys_m, meas_band, ctrl, b_next, dt_c, y + dt_c * phi,
                                             mp.P, mp.eta, u_guess=u_raw)
                elif cfg.control.linearization == "discrete":
                    sys_m = model.system(meas_band, x_e, 0.0)
                    u_raw = linearizing_control(meas, sys_m, meas_band, ctrl, b, b_dot, phi,
                                                mp.P, mp.eta, u_guess=u_raw)
                else:
                    u_raw = compute_control(meas, meas_band, model, x_e, ctrl, b_dot, phi)
            except ControlSingularity:
                singular += 1      # hold the previous value
            u_max = cfg.control.u_max
            if u_max is not None and abs(u_raw) > u_max:
                u_raw = math.copysign(u_max, u_raw)
                saturated += 1
        u_applied = smooth_control(state, u_raw) if not cfg.open_loop else 0.0

        # diagnostics for this sample (never fed back)
        sys_now = model.system(band_m, x_e, u_raw)
        su, sl = _sigma(cfg, t, fld, sys_now)
        delta = delta_model(fld, dist.rate) if dist.rate > 0 else None
        gamma = compute_gamma(fld, band_m, a, b, delta, su, sl, mp.P, mp.eta)
        cons = check_conservation(ledger, fld)
        w_l1, v_l1 = field_l1(fld)
        if pop is not None:
            power = aggregate_power(pop)
            y_plant = weighted_output(pop, band_a, a, b)
            excess, tol = _band_tolerance(pop, x_e, band_a, dt_c, state.x_ref - x_ref_prev)
        else:
            power = fld.mass_on() / fld.total_mass()
            y_plant, excess, tol = y, 0.0, 0.0
        power_model = fld.mass_on() / fld.total_mass()
        if k % sv.log_every == 0 or k == n_steps:
            rec.rows.append((t, x_e, x_p, xp_dot, state.x_ref, lower_m, u_raw, u_applied, y, y_d, e, y_plant,
                             power, power_model, reference_power(cfg, pop, x_e, x_p, xp_dot),
                             fld.total_mass(), w_l1, v_l1, gamma, cons["res_w"], cons["res_v"],
                             cons["res_total"], excess, tol))
            if sample_ids is not None:
                rec.temps.append(pop.temp[sample_ids].copy())
        if k == n_steps:
            break

        u_pde = u_applied if cfg.mode == "coupled" else u_raw
        fld, lower_m = step_pde(fld, lower_m, t, u_pde, ledger)
        x_ref_prev = state.x_ref
        advance_reference(state, u_applied, dt_c)
        if pop is not None:
            pop.step(cfg.ambient(t + 0.5 * dt_c), dt_c, Deadband.centered(state.x_ref, width),
                     rate=dist.rate, noise=cfg.population.noise, seed=cfg.population.seed,
                     step_index=step_counter)
        step_counter += 1

    M, _ = disturbance_envelope(dist.rate, cfg.horizon, n)
    if dist.sigma_kind == "sin":
        M_prime = abs(dist.sigma_amplitude) * cfg.horizon
    else:
        M_prime = max(ledger.abs_sigma_upper, ledger.abs_sigma_lower)
    meta.update({"M": M, "M_prime": M_prime, "k0": ctrl.k0, "n_agg0": ledger.n0,
                 "control_singular_holds": singular, "saturated_steps": saturated, "runtime_s": _time.perf_counter() - wall0})
    return rec.to_log(sample_ids, meta)


# ---------------------------------------------------------------- file output

def _fmt(x: float) -> str:
    return repr(float(x))


def emit_csv(log: RunLog, path: str | Path) -> Path:
    """Write the log as CSV; the header names each column with its unit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"{c} [{u}]" for c, u in COLUMNS])
        for i in range(len(log)):
            wr.writerow([_fmt(log.data[c][i]) for c in COLUMN_NAMES])
    return path


def read_csv(path: str | Path) -> RunLog:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = [h.split(" [")[0] for h in rows[0]]
    arr = np.array(rows[1:], dtype=float).reshape(-1, len(names))
    return RunLog({c: arr[:, i].copy() for i, c in enumerate(names)})


def write_meta(log: RunLog, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(log.meta, indent=2, sort_keys=True, default=float) + "\n")
    return path


_PLOT_SCRIPT = """\
# Plot the data files in this directory:  python3 plot.py
# Needs matplotlib, which the simulation package itself does not.
import csv
import matplotlib.pyplot as plt


def load(name):
    with open(name, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


fig, axes = plt.subplots(4, 1, figsize=(8, 11), sharex=True)
h, r = load("ambient.csv")
axes[0].plot([x[0] for x in r], [x[1] for x in r])
axes[0].set_ylabel("ambient [degC]")
h, r = load("references.csv")
for j in range(1, len(h)):
    axes[1].plot([x[0] for x in r], [x[j] for x in r], label=h[j])
axes[1].legend()
{temps}
h, r = load("power.csv")
for j in range(1, len(h)):
    axes[3].plot([x[0] for x in r], [x[j] for x in r], label=h[j])
axes[3].legend()
axes[3].set_xlabel("t [h]")
fig.tight_layout()
fig.savefig("figures.png", dpi=120)
"""

_TEMPS_BLOCK = """\
h, r = load("agent_temperatures.csv")
for j in range(1, len(h)):
    axes[2].plot([x[0] for x in r], [x[j] for x in r], lw=0.3)
axes[2].set_ylabel("load temperatures [degC]")"""

_NO_TEMPS_BLOCK = """\
# pde mode: there are no individual loads, so agent_temperatures.csv is not written.
axes[2].set_visible(False)"""


def _write_table(path: Path, header, cols) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in zip(*cols):
            wr.writerow([_fmt(v) for v in row])


def emit_plotdata(log: RunLog, outdir: str | Path) -> list[Path]:
    """Write one data table per figure panel plus a ``plot.py`` that draws them."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    d, files = log.data, []
    t = d["t"]
    specs = [("ambient.csv", ["t [h]", "x_e [degC]"], [t, d["x_e"]]),
             ("references.csv", ["t [h]", "x_p [degC]", "x_ref [degC]"], [t, d["x_p"], d["x_ref"]]),
             ("power.csv", ["t [h]", "power [1]", "power_model [1]", "power_ref [1]"],
              [t, d["power"], d["power_model"], d["power_ref"]])]
    for name, header, cols in specs:
        _write_table(out / name, header, cols)
        files.append(out / name)
    has_temps = log.temp_samples is not None and log.sample_ids is not None
    if has_temps:
        header = ["t [h]"] + [f"load_{i} [degC]" for i in log.sample_ids]
        _write_table(out / "agent_temperatures.csv", header, [t] + list(np.asarray(log.temp_samples).T))
        files.append(out / "agent_temperatures.csv")
    script = _PLOT_SCRIPT.replace("{temps}", _TEMPS_BLOCK if has_temps else _NO_TEMPS_BLOCK)
    (out / "plot.py").write_text(script)
    files.append(out / "plot.py")
    return files
