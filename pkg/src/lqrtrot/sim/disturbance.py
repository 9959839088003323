"""Scripted external wrenches on the base."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Disturbance:
    """Constant wrench ``[force; moment]`` in the inertial frame, applied at the
    base origin during ``[start, start + duration)``."""

    start: float
    duration: float
    wrench: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("disturbance duration must be positive")
        w = np.asarray(self.wrench, dtype=float).ravel()
        if w.shape != (6,):
            raise ValueError("wrench must have six components")
        object.__setattr__(self, "wrench", tuple(float(x) for x in w))

    def active(self, t: float) -> bool:
        return self.start <= t < self.start + self.duration

    @property
    def impulse(self) -> np.ndarray:
        return np.asarray(self.wrench) * self.duration


def apply_disturbance(disturbances, t: float) -> np.ndarray:
    """Sum of the wrenches active at time ``t``."""
    if isinstance(disturbances, Disturbance):
        disturbances = [disturbances]
    w = np.zeros(6)
    for d in disturbances:
        if d.active(t):
            w += d.wrench
    return w


def wrench_to_generalized(wrench, R, nv: int) -> np.ndarray:
    """Generalized force of a base wrench in mixed coordinates."""
    Q = np.zeros(nv)
    Q[:3] = wrench[:3]
    Q[3:6] = R.T @ np.asarray(wrench[3:6])
    return Q
