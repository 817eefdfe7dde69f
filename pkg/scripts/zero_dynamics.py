"""Show the internal dynamics left after linearising the weighted output.

In pde mode with a constant desired output the error decays as designed, but the
ON mass is conserved (no switching) so only its position can change.  The band
speed grows until the density piles against one wall and the control becomes
singular or saturates.  Prints the time of the first singular hold for several
forced-switching rates and control laws.
"""
import argparse

import numpy as np

from tcltrack.config import ScenarioConfig
from tcltrack.errors import TclTrackError
from tcltrack.harness import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--hours", type=float, default=1.0)
    ap.add_argument("--rates", type=float, nargs="+", default=[0.0, 1.0, 5.0])
    args = ap.parse_args()
    for law in ("discrete", "continuum"):
        for rate in args.rates:
            cfg = ScenarioConfig(mode="pde", horizon=args.hours).replace(**{
                "disturbance.rate": rate, "control.u_max": None, "control.linearization": law,
                "control.smoothing_window": 1})
            try:
                log = run_scenario(cfg)
            except TclTrackError as exc:      # a blow-up is the point of the demonstration
                log = exc.partial_log
                note = type(exc).__name__
            else:
                note = "completed"
            u, t = np.abs(log["u_raw"]), log["t"]
            big = np.nonzero(u > 5.0)[0]
            when = f"{t[big[0]]:.3f} h" if big.size else "never"
            print(f"{law:9s} rate={rate:4.1f}: |u| > 5 degC/h at {when}; max |u| {u.max():.3g}; "
                  f"singular holds {log.meta.get('control_singular_holds', 'n/a')}; {note}")


if __name__ == "__main__":
    main()
