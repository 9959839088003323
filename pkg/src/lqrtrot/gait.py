"""Trot scheduling, foothold geometry, swing splines and the CoM reference."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .lipm_mpc import AxisState, LipmParams, lipm_transition

PAIR_A = ("LF", "RH")
PAIR_B = ("RF", "LH")


def other_pair(pair) -> tuple:
    return PAIR_B if tuple(pair) == PAIR_A else PAIR_A


@dataclass(frozen=True)
class GaitSchedule:
    stance_pair: tuple = PAIR_A
    phase_time: float = 0.0
    T_s: float = 0.3

    def __post_init__(self):
        if tuple(self.stance_pair) not in (PAIR_A, PAIR_B):
            raise ValueError(f"stance pair must be {PAIR_A} or {PAIR_B}")
        if self.T_s <= 0:
            raise ValueError("T_s must be positive")
        object.__setattr__(self, "stance_pair", tuple(self.stance_pair))

    @property
    def swing_pair(self) -> tuple:
        return other_pair(self.stance_pair)

    @property
    def remaining(self) -> float:
        return max(0.0, self.T_s - self.phase_time)

    @property
    def phase(self) -> float:
        return min(1.0, self.phase_time / self.T_s)


@dataclass(frozen=True)
class TouchdownEvent:
    new_stance: tuple
    p0: np.ndarray | None


def support_midpoint(foot_positions: dict, pair) -> np.ndarray:
    """Middle of the support line, in the horizontal plane."""
    a, b = (np.asarray(foot_positions[f], dtype=float)[:2] for f in pair)
    return 0.5 * (a + b)


def advance(schedule: GaitSchedule, dt: float, foot_positions: dict | None = None):
    """Move the gait clock forward by ``dt``.

    Crossing ``T_s`` swaps the stance pair and reports a touchdown.  When foot
    positions are given the event carries the new current ZMP, the midpoint of
    the new support line.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = schedule.phase_time + dt
    # tolerance absorbs accumulated rounding of dt sums
    if t < schedule.T_s - 1e-9:
        return replace(schedule, phase_time=t), None
    rem = t - schedule.T_s
    if rem < 1e-9:
        rem = 0.0
    new = GaitSchedule(schedule.swing_pair, min(rem, schedule.T_s), schedule.T_s)
    p0 = None if foot_positions is None else support_midpoint(foot_positions, new.stance_pair)
    return new, TouchdownEvent(new.stance_pair, p0)


@dataclass(frozen=True)
class FootholdGeometry:
    r: float = 0.41
    theta0: float = 0.56
    dtheta: float = 0.0

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("r must be positive")


@dataclass(frozen=True)
class UserCommand:
    vx: float = 0.0
    vy: float = 0.0
    omega_z: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite([self.vx, self.vy, self.omega_z])):
            raise ValueError("command must be finite")

    def clamped(self, v_max: float, w_max: float) -> "UserCommand":
        v = np.array([self.vx, self.vy])
        nv = np.linalg.norm(v)
        if nv > v_max:
            v *= v_max / nv
        return UserCommand(float(v[0]), float(v[1]), float(np.clip(self.omega_z, -w_max, w_max)))


def foothold_pairs(p1_star, geom: FootholdGeometry) -> dict:
    """Targets for all four feet around the planned ZMP."""
    p = np.asarray(p1_star, dtype=float)[:2]
    a = geom.theta0 + geom.dtheta
    b = geom.theta0 - geom.dtheta
    u = geom.r * np.array([np.cos(a), np.sin(a)])
    w = geom.r * np.array([np.cos(b), -np.sin(b)])
    return {"LF": p + u, "RH": p - u, "RF": p + w, "LH": p - w}


def desired_footholds(p1_star, geom: FootholdGeometry, command: UserCommand, dt: float,
                      swing_pair=PAIR_A):
    """Swing-pair targets after accumulating the steering command over ``dt``.

    Returns ``(targets, geom')`` where ``geom'`` carries the updated angle.
    """
    g2 = replace(geom, dtheta=geom.dtheta + command.omega_z * dt)
    allf = foothold_pairs(p1_star, g2)
    return {f: allf[f] for f in swing_pair}, g2


def clamp_to_workspace(target_xy, center_xy, radius: float) -> np.ndarray:
    """Pull a foothold back onto a disc around the leg's nominal position."""
    t = np.asarray(target_xy, dtype=float)
    c = np.asarray(center_xy, dtype=float)
    d = t - c
    n = np.linalg.norm(d)
    if n <= radius:
        return t
    return c + d * (radius / n)


# ------------------------------------------------------------ swing splines

@dataclass(frozen=True)
class SwingReference:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def _smoothstep(u):
    return 3 * u * u - 2 * u ** 3, 6 * u - 6 * u * u, 6 - 12 * u


def swing_reference(start, target, apex_offset: float, s: float, T_s: float) -> SwingReference:
    """Cubic swing profile at normalized phase ``s``.

    Horizontal motion is one cubic with zero end velocities.  Height uses two
    cubics meeting at ``s = 0.5`` at ``max(start_z, target_z) + apex_offset``,
    with zero vertical velocity at both ends and at the apex.  Derivatives are
    with respect to time.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("phase s must lie in [0, 1]")
    p0 = np.asarray(start, dtype=float)
    p1 = np.asarray(target, dtype=float)
    h, dh, ddh = _smoothstep(s)
    pos = np.empty(3)
    vel = np.empty(3)
    acc = np.empty(3)
    pos[:2] = p0[:2] + (p1[:2] - p0[:2]) * h
    vel[:2] = (p1[:2] - p0[:2]) * dh / T_s
    acc[:2] = (p1[:2] - p0[:2]) * ddh / T_s ** 2
    pos[2], vel[2], acc[2] = _height(p0[2], p1[2], max(p0[2], p1[2]) + apex_offset, s, T_s)
    return SwingReference(pos, vel, acc)


def _height(z0, z1, za, s, T_s):
    if s <= 0.5:
        a, b, u = z0, za, 2 * s
    else:
        a, b, u = za, z1, 2 * s - 1
    h, dh, ddh = _smoothstep(u)
    return a + (b - a) * h, (b - a) * dh * 2 / T_s, (b - a) * ddh * 4 / T_s ** 2


def _hermite_to_rest(p, v, target, tau, t):
    """Cubic from (p, v) to (target, 0) over duration ``tau``, sampled at ``t``."""
    u = t / tau
    d = target - p
    # p(u) = p + v tau u + (3d - 2 v tau) u^2 + (v tau - 2d) u^3
    c1 = v * tau
    c2 = 3 * d - 2 * v * tau
    c3 = v * tau - 2 * d
    pos = p + c1 * u + c2 * u * u + c3 * u ** 3
    vel = (c1 + 2 * c2 * u + 3 * c3 * u * u) / tau
    acc = (2 * c2 + 6 * c3 * u) / tau ** 2
    return pos, vel, acc


class SwingTrajectory:
    """Swing reference for one foot, re-anchored every control cycle.

    The horizontal part is rebuilt each cycle from the current reference
    position and velocity to the latest target, ending at rest.  The height
    profile is fixed at lift-off so the apex does not jump.
    """

    def __init__(self, start, target, apex_offset: float, T_s: float):
        self.start = np.asarray(start, dtype=float).copy()
        self.T_s = float(T_s)
        self.target = np.asarray(target, dtype=float).copy()
        self.z_apex = max(self.start[2], self.target[2]) + apex_offset
        self.pos = self.start.copy()
        self.vel = np.zeros(3)
        self.acc = np.zeros(3)
        self.t = 0.0

    def step(self, target_xy, dt: float) -> SwingReference:
        """Advance the reference by ``dt`` toward the (possibly moved) target."""
        self.target[:2] = target_xy
        tau = self.T_s - self.t
        t_next = min(self.t + dt, self.T_s)
        if tau <= dt + 1e-12:
            self.pos[:2] = self.target[:2]
            self.vel[:2] = 0.0
            self.acc[:2] = 0.0
        else:
            p, v, a = _hermite_to_rest(self.pos[:2], self.vel[:2], self.target[:2], tau, dt)
            self.pos[:2], self.vel[:2], self.acc[:2] = p, v, a
        s = t_next / self.T_s
        self.pos[2], self.vel[2], self.acc[2] = _height(self.start[2], self.target[2],
                                                        self.z_apex, s, self.T_s)
        self.t = t_next
        return SwingReference(self.pos.copy(), self.vel.copy(), self.acc.copy())


# ------------------------------------------------------------ CoM reference

@dataclass(frozen=True)
class ComReference:
    position: np.ndarray  # x, y, z
    velocity: np.ndarray  # x, y, z (z velocity is zero)


def com_reference(x0: AxisState, y0: AxisState, zmp_xy, params: LipmParams,
                  stance_heights, dt: float = 0.0025) -> ComReference:
    """One-step LIPM rollout of the current CoM state around the current ZMP."""
    A, B = lipm_transition(dt, params.omega)
    zmp = np.asarray(zmp_xy, dtype=float)
    x = A @ x0.as_array() + B * zmp[0]
    y = A @ y0.as_array() + B * zmp[1]
    z = float(np.mean(stance_heights)) + params.z_com
    return ComReference(np.array([x[0], y[0], z]), np.array([x[1], y[1], 0.0]))
