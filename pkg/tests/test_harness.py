import json

import numpy as np
import pytest

from tcltrack.cli import main
from tcltrack.config import ScenarioConfig
from tcltrack.errors import PositivityViolation
from tcltrack.harness import COLUMN_NAMES, RunLog, emit_csv, emit_plotdata, read_csv, run_scenario


def small(mode="agents", **kw):
    base = {"population.n": 400, "solver.spinup_h": 0.1, "horizon": 0.05}
    base.update(kw)
    return ScenarioConfig(mode=mode).replace(**base)


@pytest.mark.parametrize("mode", ["agents", "pde", "coupled"])
def test_smoke_short_horizon(mode):
    log = run_scenario(small(mode, horizon=0.01))
    assert len(log) >= 2
    n = log["n_agg"]
    assert np.all(np.abs(n - n[0]) <= 1e-10 * n[0])
    assert np.all(np.diff(log["t"]) > 0)
    assert all(np.all(np.isfinite(log[c])) for c in COLUMN_NAMES)


def test_pde_closed_loop_error_decays():
    cfg = ScenarioConfig(mode="pde", horizon=0.2, initial_error=200.0).replace(**{
        "solver.ctrl_dt": 5e-5, "solver.spinup_h": 1.0, "control.smoothing_window": 1,
        "control.u_max": None, "control.linearization": "one_step"})
    log = run_scenario(cfg)
    t, e = log["t"], log["e"]
    i = int(np.argmin(np.abs(t - 1 / 7.5)))
    assert e[0] == pytest.approx(200.0)
    assert abs(e[i] - 200 * np.exp(-7.5 * t[i])) <= 0.01 * abs(200 * np.exp(-7.5 * t[i]))


def test_csv_shapes(tmp_path):
    empty = RunLog()
    p = emit_csv(empty, tmp_path / "empty.csv")
    lines = p.read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("t [h],x_e [degC]")
    data = {c: np.arange(3, dtype=float) + i for i, c in enumerate(COLUMN_NAMES)}
    log = RunLog(data)
    p = emit_csv(log, tmp_path / "three.csv")
    assert len(p.read_text().splitlines()) == 4
    first = p.read_bytes()
    emit_csv(log, p)
    assert p.read_bytes() == first
    back = read_csv(p)
    for c in COLUMN_NAMES:
        np.testing.assert_array_equal(back[c], data[c])


def test_identical_config_gives_identical_files(tmp_path):
    cfg = small("agents", **{"disturbance.rate": 1.0, "population.noise": 0.05})
    a, b = run_scenario(cfg), run_scenario(cfg)
    emit_csv(a, tmp_path / "a.csv")
    emit_csv(b, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c = run_scenario(cfg.replace(**{"population.seed": 2}))
    assert not np.array_equal(a["power"], c["power"])


def test_plotdata_agents_and_pde(tmp_path):
    log = run_scenario(small("agents", **{"population.n": 300}))
    files = emit_plotdata(log, tmp_path / "ag")
    data_files = [f for f in files if f.suffix == ".csv"]
    assert len(data_files) == 4
    header = (tmp_path / "ag" / "agent_temperatures.csv").read_text().splitlines()[0].split(",")
    assert len(header) - 1 == 200
    log = run_scenario(small("pde"))
    files = emit_plotdata(log, tmp_path / "pde")
    assert not (tmp_path / "pde" / "agent_temperatures.csv").exists()
    assert "agent_temperatures.csv is not written" in (tmp_path / "pde" / "plot.py").read_text()
    compile((tmp_path / "pde" / "plot.py").read_text(), "plot.py", "exec")


def test_error_attaches_partial_log():
    cfg = small("pde", horizon=0.5, **{"disturbance.sigma_kind": "sin", "disturbance.sigma_amplitude": 1e7,
                                       "disturbance.sigma_period": 0.05, "solver.spinup_h": 0.0,
                                       "control.u_max": None})
    with pytest.raises(PositivityViolation) as exc:
        run_scenario(cfg)
    assert isinstance(exc.value.partial_log, RunLog)
    assert "aborted" in exc.value.partial_log.meta


# -- command line


def _toml(tmp_path, text):
    p = tmp_path / "cfg.toml"
    p.write_text(text)
    return str(p)


def test_cli_run_and_check(tmp_path, capsys):
    cfg = _toml(tmp_path, 'horizon = 0.05\n[population]\nn = 300\n[solver]\nspinup_h = 0.1\n')
    out = tmp_path / "run"
    assert main(["run", "--config", cfg, "--mode", "pde", "--seed", "3", "--out", str(out)]) == 0
    assert (out / "run.csv").exists() and (out / "plotdata" / "plot.py").exists()
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["config"]["mode"] == "pde" and meta["config"]["population"]["seed"] == 3
    status = main(["check", str(out)])
    report = json.loads((out / "check_report.json").read_text())
    assert status == (0 if report["passed"] else 1)
    assert report["checks"]["mass_conservation"]["passed"]


def test_cli_check_names_failing_invariant(tmp_path, capsys):
    cfg = _toml(tmp_path, 'mode = "pde"\nhorizon = 0.02\n[population]\nn = 300\n[solver]\nspinup_h = 0.0\n')
    out = tmp_path / "run"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    log = read_csv(out / "run.csv")
    log.data["cons_res_total"][3] = 1e-3
    emit_csv(log, out / "run.csv")
    capsys.readouterr()
    assert main(["check", str(out)]) == 1
    assert "mass_conservation" in capsys.readouterr().err


def test_cli_env_overrides_output(tmp_path, monkeypatch):
    cfg = _toml(tmp_path, 'mode = "pde"\nhorizon = 0.01\n[population]\nn = 100\n[solver]\nspinup_h = 0.0\n')
    monkeypatch.setenv("TCLTRACK_OUT", str(tmp_path / "env"))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "ignored")]) == 0
    assert (tmp_path / "env" / "run.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_cli_flushes_partial_log_on_error(tmp_path, capsys):
    cfg = _toml(tmp_path, 'mode = "pde"\nhorizon = 0.5\n[population]\nn = 100\n[solver]\nspinup_h = 0.0\n'
                          '[disturbance]\nsigma_kind = "sin"\nsigma_amplitude = 1e7\nsigma_period = 0.05\n')
    out = tmp_path / "bad"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 2
    assert (out / "run.csv").exists()
    assert "PositivityViolation" in capsys.readouterr().err
    assert "aborted" in json.loads((out / "run_meta.json").read_text())


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = _toml(tmp_path, 'bogus = 1\n')
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
