"""Set-point schedules made of constant holds joined by 9th-order smoothstep transitions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .errors import ScheduleInvalid, TrajectoryRangeError

SMOOTHSTEP_COEFFS = (126.0, -420.0, 540.0, -315.0, 70.0)
ENDPOINT_TOL = 1e-10


def smoothstep_poly(coeffs=SMOOTHSTEP_COEFFS) -> Polynomial:
    """tau**5 * sum_l a_l tau**l as a polynomial in tau."""
    return Polynomial([0.0] * 5 + [float(c) for c in coeffs])


@dataclass(frozen=True)
class Transition:
    t_start: float
    t_end: float
    x_start: float
    x_end: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def amplitude(self) -> float:
        return self.x_end - self.x_start


@dataclass(frozen=True)
class SetpointSchedule:
    """Piecewise set-point trajectory on ``[t_start, t_end]`` (hours).

    Between transitions the set-point holds the last reached value.
    """

    x0: float
    transitions: tuple[Transition, ...] = ()
    t_start: float = 0.0
    t_end: float = float("inf")
    coeffs: tuple[float, ...] = SMOOTHSTEP_COEFFS
    _polys: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        prev_t, prev_x = self.t_start, self.x0
        for k, tr in enumerate(self.transitions):
            if not tr.t_end > tr.t_start:
                raise ScheduleInvalid(f"transition {k}: t_end must exceed t_start")
            if tr.t_start < prev_t:
                raise ScheduleInvalid(f"transition {k} overlaps or precedes the previous segment")
            if not np.isclose(tr.x_start, prev_x, rtol=0, atol=1e-12):
                raise ScheduleInvalid(f"transition {k} starts at {tr.x_start}, held value is {prev_x}")
            prev_t, prev_x = tr.t_end, tr.x_end
        p = smoothstep_poly(self.coeffs)
        object.__setattr__(self, "_polys", (p, p.deriv(1), p.deriv(2), p.deriv(3)))

    @classmethod
    def from_steps(cls, x0: float, steps, t_end: float = float("inf"), **kw) -> "SetpointSchedule":
        """Build from ``(t_start, t_end, target)`` triples, chaining start values."""
        out, x = [], x0
        for t_i, t_f, target in steps:
            out.append(Transition(float(t_i), float(t_f), x, float(target)))
            x = float(target)
        return cls(x0, tuple(out), t_end=t_end, **kw)

    def derivatives(self, t: float, order: int = 2) -> tuple[float, ...]:
        if not (self.t_start <= t <= self.t_end):
            raise TrajectoryRangeError(f"t={t} outside schedule horizon [{self.t_start}, {self.t_end}]")
        held = self.x0
        for tr in self.transitions:
            if t < tr.t_start:
                break
            if t <= tr.t_end:
                tau = (t - tr.t_start) / tr.duration
                A, T = tr.amplitude, tr.duration
                vals = [tr.x_start + A * self._polys[0](tau)]
                vals += [A * self._polys[k](tau) / T ** k for k in range(1, order + 1)]
                return tuple(float(v) for v in vals)
            held = tr.x_end
        return (held,) + (0.0,) * order


def eval_trajectory(sched: SetpointSchedule, t: float) -> tuple[float, float, float]:
    """Set-point at time ``t`` with its first two time derivatives."""
    return sched.derivatives(t, order=2)


def verify_endpoint_conditions(sched: SetpointSchedule, tol: float = ENDPOINT_TOL) -> dict:
    """Check that every transition starts and ends at rest up to the third derivative.

    Derivatives are compared in normalised form, ``d^k x/dt^k * T**k / |A|``, so
    the check is independent of segment length and amplitude.
    """
    p = smoothstep_poly(sched.coeffs)
    derivs = [p.deriv(k) for k in (1, 2, 3)]
    report = {"coeff_sum": float(sum(sched.coeffs)), "segments": []}
    for k, tr in enumerate(sched.transitions):
        seg = {"index": k, "value_start": float(p(0.0)), "value_end": float(p(1.0))}
        worst = 0.0
        if tr.amplitude != 0.0:
            for order, d in enumerate(derivs, start=1):
                for tau in (0.0, 1.0):
                    val = abs(float(d(tau)))
                    seg[f"d{order}_tau{int(tau)}"] = val
                    worst = max(worst, val)
            worst = max(worst, abs(seg["value_start"]), abs(seg["value_end"] - 1.0))
        seg["max_violation"] = worst
        report["segments"].append(seg)
        if worst > tol:
            raise ScheduleInvalid(f"transition {k} violates endpoint conditions (max {worst:.3e})")
    return report
