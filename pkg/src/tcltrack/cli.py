"""Command line entry point: ``tcltrack run | check | demo``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import MODES, ScenarioConfig, load_config
from .diagnostics import run_report
from .errors import TclTrackError
from .harness import emit_csv, emit_plotdata, read_csv, run_scenario, write_meta

OUT_ENV = "TCLTRACK_OUT"


def _outdir(arg: str | None, default: str) -> Path:
    env = os.environ.get(OUT_ENV)
    return Path(env if env else (arg or default))


def _save(log, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(log, out / "run.csv")
    write_meta(log, out / "run_meta.json")
    emit_plotdata(log, out / "plotdata")


def _check(out: Path) -> int:
    log = read_csv(out / "run.csv")
    meta = json.loads((out / "run_meta.json").read_text())
    report = run_report(log.data, meta)
    (out / "check_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for name, res in report["checks"].items():
        print(f"{'PASS' if res['passed'] else 'FAIL'}  {name}")
    if report["failing"]:
        print(f"failing invariant(s): {', '.join(report['failing'])}", file=sys.stderr)
        return 1
    return 0


def _run(cfg: ScenarioConfig, out: Path) -> int:
    try:
        log = run_scenario(cfg)
    except TclTrackError as exc:
        partial = getattr(exc, "partial_log", None)
        if partial is not None:
            _save(partial, out)
        print(f"run aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    _save(log, out)
    print(f"wrote {len(log)} rows to {out / 'run.csv'}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="tcltrack", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--config", help="TOML scenario file (defaults reproduce the benchmark)")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help=f"output directory (overridden by ${OUT_ENV})")
    c = sub.add_parser("check", help="replay diagnostics on a logged run directory")
    c.add_argument("rundir")
    d = sub.add_parser("demo", help="run the benchmark scenario and check it")
    d.add_argument("--out")
    d.add_argument("--agents", type=int, default=10_000)
    args = ap.parse_args(argv)

    try:
        if args.cmd == "check":
            return _check(Path(args.rundir))
        if args.cmd == "run":
            cfg = load_config(args.config) if args.config else ScenarioConfig()
            if args.mode:
                cfg = cfg.replace(mode=args.mode)
            if args.seed is not None:
                cfg = cfg.replace(**{"population.seed": args.seed})
            return _run(cfg, _outdir(args.out, "runs/latest"))
        out = _outdir(args.out, "runs/demo")
        status = _run(ScenarioConfig().replace(**{"population.n": args.agents}), out)
        return status or _check(out)
    except (TclTrackError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
