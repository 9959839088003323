"""Penalty contact between foot points and the terrain."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ContactParams:
    kp: float = 3e4       # N/m
    kd: float = 1e3       # N s/m
    mu: float = 0.8
    kt: float = 1e4       # N s/m, tangential viscosity below the Coulomb cap

    def __post_init__(self):
        if self.kp <= 0 or self.kd <= 0 or self.kt <= 0 or self.mu < 0:
            raise ValueError("contact gains must be positive and mu non-negative")


def foot_gap(terrain, p):
    """Signed normal distance of a point above the terrain and the unit normal."""
    n = terrain.normal(p[0], p[1])
    return (p[2] - terrain.height(p[0], p[1])) * n[2], n


def contact_forces(params: ContactParams, terrain, positions, velocities) -> np.ndarray:
    """Per-foot contact force (N, inertial frame), one row per foot.

    Normal: ``max(0, -kp*gap - kd*gap_rate)``.  Tangential: viscous
    ``-kt * v_t`` clipped to magnitude ``mu * normal``.
    """
    positions = np.atleast_2d(positions)
    velocities = np.atleast_2d(velocities)
    out = np.zeros_like(positions, dtype=float)
    for i, (p, v) in enumerate(zip(positions, velocities)):
        gap, n = foot_gap(terrain, p)
        if gap >= 0.0:
            continue
        vn = float(n @ v)
        fn = max(0.0, -params.kp * gap - params.kd * vn)
        vt = v - vn * n
        ft = -params.kt * vt
        cap = params.mu * fn
        m = np.linalg.norm(ft)
        if m > cap:
            ft *= cap / m
        out[i] = fn * n + ft
    return out
