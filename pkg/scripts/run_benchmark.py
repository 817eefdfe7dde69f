"""Run the 24 h benchmark (or any TOML scenario) and save its outputs next to a check report.

    python3 scripts/run_benchmark.py [--config FILE] [--agents N] [--out DIR]
"""
import argparse
import json
from pathlib import Path

import numpy as np

from tcltrack.config import ScenarioConfig, load_config
from tcltrack.diagnostics import run_report
from tcltrack.harness import emit_csv, emit_plotdata, run_scenario, write_meta


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--agents", type=int)
    ap.add_argument("--out", default="runs/benchmark")
    args = ap.parse_args()
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.agents:
        cfg = cfg.replace(**{"population.n": args.agents})
    log = run_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(log, out / "run.csv")
    write_meta(log, out / "run_meta.json")
    emit_plotdata(log, out / "plotdata")
    report = run_report(log.data, log.meta)
    (out / "check_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")

    t = log["t"]
    win = t >= 1.0
    rms = float(np.sqrt(np.mean((log["power"][win] - log["power_ref"][win]) ** 2)))
    print(f"runtime {log.meta['runtime_s']:.1f} s, {len(log)} rows -> {out}")
    print(f"power RMS vs reference over t >= 1 h: {rms:.3f}")
    print(f"saturated control steps: {log.meta['saturated_steps']}, singular holds: "
          f"{log.meta['control_singular_holds']}")
    for name, res in report["checks"].items():
        print(f"  {'PASS' if res['passed'] else 'FAIL'}  {name}")
    for h in range(0, int(t[-1]) + 1, 2):
        i = int(np.argmin(np.abs(t - h)))
        print(f"  t={t[i]:5.1f} h  x_p={log['x_p'][i]:.2f}  x_ref={log['x_ref'][i]:.2f}  "
              f"u={log['u_raw'][i]:+.3f}  power={log['power'][i]:.3f}  ref={log['power_ref'][i]:.3f}")


if __name__ == "__main__":
    main()
