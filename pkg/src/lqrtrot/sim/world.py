"""Headless floating-base simulator with penalty foot contacts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import GRAVITY, GeneralizedState, RobotModel, snapshot
from ..model import _kernels as K
from .contact import ContactParams, foot_gap
from .disturbance import wrench_to_generalized
from .terrain import FlatTerrain

VELOCITY_LIMIT = 100.0


class SimulationFault(RuntimeError):
    """State diverged; ``last_state`` is the last finite state."""

    def __init__(self, message, last_state, time=None):
        super().__init__(message)
        self.last_state = last_state
        self.time = time


@dataclass
class World:
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())
    terrain: object = field(default_factory=FlatTerrain)
    contact: ContactParams = field(default_factory=ContactParams)
    dt: float = 0.0005
    control_period: float = 0.0025

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        if self.dt <= 0 or self.dt > self.control_period + 1e-15:
            raise ValueError("integrator step must be positive and no longer than the control period")

    @property
    def substeps(self) -> int:
        n = self.control_period / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError("control period must be a whole number of integrator steps")
        return int(round(n))


@dataclass
class StepResult:
    state: GeneralizedState
    forces: np.ndarray      # (n_feet, 3) contact forces applied during the step
    in_contact: np.ndarray  # (n_feet,) bool


def _quat_step(q, w, dt):
    """``q * exp(w dt)`` for a body-frame rate ``w``."""
    th = np.linalg.norm(w) * dt
    if th < 1e-12:
        dq = np.array([1.0, 0.5 * w[0] * dt, 0.5 * w[1] * dt, 0.5 * w[2] * dt])
    else:
        ax = w / np.linalg.norm(w)
        dq = np.concatenate([[np.cos(0.5 * th)], np.sin(0.5 * th) * ax])
    a0, a1, a2, a3 = q
    b0, b1, b2, b3 = dq
    out = np.array([
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ])
    return out / np.linalg.norm(out)


def clamp_command(model: RobotModel, tau) -> np.ndarray:
    tau = np.array(tau, dtype=float)
    tau[:6] = 0.0
    tau[6:] = np.clip(tau[6:], -model.torque_limits, model.torque_limits)
    return tau


def _drift(state: GeneralizedState, v, dt) -> GeneralizedState:
    return GeneralizedState(state.base_position + dt * v[:3],
                            _quat_step(state.base_orientation, v[3:6], dt),
                            state.q_j + dt * v[6:], state.v)


def step(world: World, model: RobotModel, state: GeneralizedState, tau_cmd, dt=None,
         wrench=None, midpoint_iterations: int = 2) -> StepResult:
    """Advance ``M qdd = S tau + Jc' lam - h`` by one integrator step.

    Positions move half a step with the old velocity, the velocity update is
    evaluated there with bias forces at the mean of old and new velocity, and
    positions finish with the new velocity.  Contact damping enters the
    velocity solve implicitly so stiff penalty contacts stay stable.  The
    scheme is second order and reproduces ballistic flight exactly.
    """
    dt = world.dt if dt is None else dt
    mid = _drift(state, state.v, 0.5 * dt)
    mid.v = state.v
    snap = snapshot(model, mid, world.gravity)
    tau = clamp_command(model, tau_cmd)
    f_ext = np.zeros(model.nv)
    if wrench is not None:
        f_ext = wrench_to_generalized(wrench, mid.rotation, model.nv)
    nf = len(model.foot_names)
    active = []
    for i in range(nf):
        gap, n = foot_gap(world.terrain, snap.foot_pos[i])
        if gap < 0.0:
            active.append((i, gap, n))
    h = snap.h
    v_new, forces, mask = _velocity_update(world.contact, snap, state.v, tau - h + f_ext,
                                           active, dt, nf)
    for _ in range(midpoint_iterations):
        mid.v = 0.5 * (state.v + v_new)
        h = K.bias_only(*model.kernel_args(), mid.base_position, mid.base_orientation,
                        mid.q_j, mid.v, world.gravity)
        v_new, forces, mask = _velocity_update(world.contact, snap, state.v, tau - h + f_ext,
                                               active, dt, nf)
    if not np.all(np.isfinite(v_new)) or np.max(np.abs(v_new)) > VELOCITY_LIMIT:
        raise SimulationFault("state diverged", state)
    new = _drift(mid, v_new, 0.5 * dt)
    new.base_position = state.base_position + 0.5 * dt * (state.v[:3] + v_new[:3])
    new.v = v_new
    return StepResult(new, forces, mask)


def _velocity_update(cp: ContactParams, snap, v, f, active, dt, nf):
    """Solve ``(M + dt J'DJ) v+ = M v + dt (f + J'F0)`` over contact modes.

    Each touching foot is sticking (viscous tangent), sliding (tangent at the
    Coulomb cap along the slip direction) or released when the normal force
    would pull.  Modes are updated until consistent with the new velocity.
    """
    Mv = snap.M @ v
    mode = {i: 0 for i, _, _ in active}
    tdir = {}
    for i, _, n in active:
        vt = snap.foot_vel[i] - (n @ snap.foot_vel[i]) * n
        nt = np.linalg.norm(vt)
        tdir[i] = vt / nt if nt > 1e-9 else np.zeros(3)
    forces = np.zeros((nf, 3))
    v_new = v
    for _ in range(8):
        A = snap.M.copy()
        rhs = Mv + dt * f
        for i, gap, n in active:
            if mode[i] < 0:
                continue
            J = snap.J_feet[3 * i:3 * i + 3]
            if mode[i] == 0:
                nn = np.outer(n, n)
                D = cp.kd * nn + cp.kt * (np.eye(3) - nn)
                F0 = -cp.kp * gap * n
            else:
                d = n - cp.mu * tdir[i]
                D = cp.kd * np.outer(d, n)
                F0 = -cp.kp * gap * d
            A += dt * J.T @ D @ J
            rhs += dt * J.T @ F0
        v_new = np.linalg.solve(A, rhs)
        changed = False
        forces[:] = 0.0
        for i, gap, n in active:
            if mode[i] < 0:
                continue
            vf = snap.J_feet[3 * i:3 * i + 3] @ v_new
            vn = n @ vf
            fn = -cp.kp * gap - cp.kd * vn
            if fn < 0.0:
                mode[i] = -1
                changed = True
                continue
            vt = vf - vn * n
            if mode[i] == 0:
                ft = -cp.kt * vt
                if np.linalg.norm(ft) > cp.mu * fn * (1 + 1e-12):
                    mode[i] = 1
                    tdir[i] = vt / np.linalg.norm(vt)
                    changed = True
                forces[i] = fn * n + ft
            else:
                if tdir[i] @ vt < 0:
                    mode[i] = 0
                    changed = True
                forces[i] = fn * (n - cp.mu * tdir[i])
        if not changed:
            break
    mask = np.zeros(nf, dtype=bool)
    for i, _, _ in active:
        mask[i] = mode[i] >= 0
    return v_new, forces, mask
