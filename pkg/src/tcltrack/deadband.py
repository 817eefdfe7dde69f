"""Thermostat deadband and the moving-to-fixed coordinate map z = (x - lower) / width."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidScenario


@dataclass(frozen=True)
class Deadband:
    """Temperature interval ``[lower, lower + width]`` in degC."""

    lower: float
    width: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.width)) or self.width <= 0:
            raise InvalidScenario(f"deadband needs finite lower and width > 0, got {self!r}")

    @classmethod
    def centered(cls, center: float, width: float) -> "Deadband":
        return cls(center - 0.5 * width, width)

    @property
    def upper(self) -> float:
        return self.lower + self.width

    @property
    def center(self) -> float:
        return self.lower + 0.5 * self.width

    def shifted(self, dx: float) -> "Deadband":
        return Deadband(self.lower + dx, self.width)


def normalize(x, band: Deadband):
    return (np.asarray(x, dtype=float) - band.lower) / band.width


def denormalize(z, band: Deadband):
    return band.lower + np.asarray(z, dtype=float) * band.width
