"""The 400 Hz control pipeline: plan, references, projection, gains and torques."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..gait import (PAIR_A, ComReference, FootholdGeometry, GaitSchedule, SwingTrajectory,
                    UserCommand, advance, clamp_to_workspace, com_reference, foothold_pairs,
                    other_pair, support_midpoint)
from ..lipm_mpc import AxisState, FootstepPlanner, LipmParams, predict_touchdown_state
from ..lqr import (CareError, SwingGains, base_state, gravity_compensation, input_matrix,
                   linearize_base, lqr_torque, pd_torque, solve_care, stance_weights)
from ..model import GeneralizedState, RobotModel, quat_from_euler, snapshot
from ..projection import ContactQpError, constraint_space_torques, projected_dynamics
from .config import ControllerConfig, PlannerConfig

STAGES = ("plan", "references", "projection", "linearize", "care", "qp", "total")
CONTROL_PERIOD = 0.0025


class SolverFault(RuntimeError):
    """Gain synthesis or the contact QP failed beyond the allowed hold time."""


@dataclass
class TickOutput:
    tau: np.ndarray
    stance: tuple
    X: np.ndarray
    X_des: np.ndarray
    com: np.ndarray
    com_vel: np.ndarray
    com_ref: ComReference
    zmp: np.ndarray
    lambda_c: np.ndarray
    K: np.ndarray | None
    care_residual: float
    closed_loop_max_real: float
    qp_feasible: bool
    qp_iterations: int
    gain_held: bool
    qdd_cmd: np.ndarray | None = None
    a_ff: np.ndarray | None = None
    timing: dict = field(default_factory=dict)


class _Clock:
    def __init__(self):
        self.t = {}

    def run(self, name, fn, *args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        self.t[name] = self.t.get(name, 0.0) + time.perf_counter() - t0
        return out


class LocomotionController:
    """Trot (or stand) controller driven one control period at a time.

    ``step`` takes the estimated state and the user command and returns the
    actuated torque.  Touchdowns are scheduled by the gait clock.  With
    ``pipelined`` the gain synthesis runs on a worker thread while the main
    thread builds the swing torques; both halves are joined before the torque
    sum, so the commanded torques equal the synchronous ones.
    """

    def __init__(self, model: RobotModel, planner: PlannerConfig | None = None,
                 controller: ControllerConfig | None = None, gait: str = "trot",
                 pipelined: bool = False, dt: float = CONTROL_PERIOD):
        self.model = model
        self.pc = planner or PlannerConfig()
        self.cc = controller or ControllerConfig()
        if self.cc.type not in ("lqr", "pd"):
            raise ValueError(f"unknown controller type {self.cc.type!r}")
        self.dt = dt
        self.params = LipmParams(self.pc.z_com, self.pc.g)
        self.mpc = FootstepPlanner([self.pc.T_s] * self.pc.N, [self.pc.Q] * self.pc.N,
                                   [self.pc.R] * self.pc.N, self.params)
        self.swing_gains = SwingGains(tuple(self.cc.swing_kp), tuple(self.cc.swing_kd))
        self.geom = FootholdGeometry(self.pc.r, self.pc.theta0)
        self.walking = False
        self.gait = gait
        self.schedule = GaitSchedule(PAIR_A, 0.0, self.pc.T_s)
        self.swings: dict = {}
        self.zmp = None
        self.yaw_des = None
        self.P_prev = None
        self.prev_stance = None
        self.prev_care = None
        self.K_last = None
        self.held = 0
        self.qp_warm = None
        self._wcache = {}
        self.pipelined = pipelined
        self._pool = ThreadPoolExecutor(max_workers=1) if pipelined else None
        nom = model.nominal_state()
        self._nominal_feet = {}
        pl = snapshot(model, nom)
        c = pl.com[:2]
        for i, f in enumerate(model.foot_names):
            self._nominal_feet[f] = pl.foot_pos[i][:2] - c

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    # ------------------------------------------------------------ gait events

    def start_walking(self, foot_positions: dict):
        """Leave the four-foot stance: pair A stays down, pair B lifts off."""
        self.walking = True
        self.schedule = GaitSchedule(PAIR_A, 0.0, self.pc.T_s)
        self.zmp = support_midpoint(foot_positions, PAIR_A)
        self._lift(foot_positions, self.schedule.swing_pair)

    def _lift(self, foot_positions, pair):
        self.swings = {f: SwingTrajectory(foot_positions[f], foot_positions[f], self.pc.apex,
                                          self.pc.T_s) for f in pair}

    @property
    def stance(self) -> tuple:
        if not self.walking:
            return tuple(self.model.foot_names)
        return self.schedule.stance_pair

    # ------------------------------------------------------------ one tick

    def step(self, state: GeneralizedState, command: UserCommand) -> TickOutput:
        model = self.model
        clock = _Clock()
        t_start = time.perf_counter()
        snap = snapshot(model, state)
        feet = {f: snap.foot_pos[i] for i, f in enumerate(model.foot_names)}
        com, com_vel = snap.com, snap.com_vel
        X = base_state(state)
        if self.yaw_des is None:
            self.yaw_des = float(X[5])
        self.yaw_des += command.omega_z * self.dt

        # gait clock and footstep plan
        t0 = time.perf_counter()
        if self.walking:
            sched, event = advance(self.schedule, self.dt, feet)
            self.schedule = sched
            if event is not None:
                self.zmp = event.p0
                self._lift(feet, sched.swing_pair)
        elif self.zmp is None or self.gait == "stand":
            self.zmp = np.mean([feet[f][:2] for f in model.foot_names], axis=0)
        cy, sy = np.cos(self.yaw_des), np.sin(self.yaw_des)
        v_des = np.array([cy * command.vx - sy * command.vy, sy * command.vx + cy * command.vy])
        targets = {}
        if self.walking:
            t_rem = self.schedule.remaining
            p1 = np.empty(2)
            c_td = np.empty(2)
            for ax in range(2):
                x0 = AxisState(float(com[ax]), float(com_vel[ax]))
                x_td = predict_touchdown_state(x0, float(self.zmp[ax]), t_rem, self.params)
                c_td[ax] = x_td.pos
                p1[ax] = self.mpc.plan(x_td, float(self.zmp[ax]), float(v_des[ax])).first
            self.geom = FootholdGeometry(self.geom.r, self.geom.theta0,
                                         self.geom.dtheta + command.omega_z * self.dt)
            allf = foothold_pairs(p1, self.geom)
            for f in self.schedule.swing_pair:
                # reachable disc around the nominal foot of the body at touchdown
                centre = c_td + self._rotated_nominal(f)
                targets[f] = clamp_to_workspace(allf[f], centre, self.pc.workspace_radius)
        clock.t["plan"] = time.perf_counter() - t0

        # references
        t0 = time.perf_counter()
        swing_refs = {f: self.swings[f].step(targets[f], self.dt) for f in targets}
        stance = self.stance
        heights = [feet[f][2] for f in stance]
        ref = com_reference(AxisState(float(com[0]), float(com_vel[0])),
                            AxisState(float(com[1]), float(com_vel[1])), self.zmp,
                            self.params, heights, self.dt)
        if not self.walking:
            # hold the CoM over the support centre while standing
            ref = ComReference(np.array([self.zmp[0], self.zmp[1], ref.position[2]]),
                               np.zeros(3))
        X_des = np.zeros(12)
        X_des[:3] = X[:3] + (ref.position - com)
        X_des[5] = self.yaw_des
        X_des[6:8] = ref.velocity[:2]
        X_des[11] = command.omega_z
        clock.t["references"] = time.perf_counter() - t0

        # projection and gravity compensation
        t0 = time.perf_counter()
        idx = np.array([model.foot_index(f) for f in stance])
        Jc = snap.jacobian(idx)
        same = self.prev_stance == stance
        dyn = projected_dynamics(snap.M, snap.h, Jc, self.P_prev if same else None, self.dt)
        a_ff = None
        if self.walking and self.cc.feedforward:
            a_ff = self.params.omega ** 2 * (com[:2] - self.zmp)
        tau0 = gravity_compensation(model, state, dyn, base_acc=a_ff, M=snap.M)
        clock.t["projection"] = time.perf_counter() - t0

        swing_feet = tuple(f for f in model.foot_names if f not in stance)

        def gains():
            return self._gains(state, tau0, dyn, idx, swing_feet, X_des, X)

        if self._pool is not None:
            fut = self._pool.submit(gains)
            tau_sw = self._swing_torque(snap, swing_refs, state)
            tau_m2, K, res, hmax, held, tl = fut.result()
        else:
            tau_m2, K, res, hmax, held, tl = gains()
            tau_sw = self._swing_torque(snap, swing_refs, state)
        clock.t.update(tl)

        # contact forces and constraint-space torques
        t0 = time.perf_counter()
        tau_motion = tau_m2 + tau_sw
        qdd = dyn.forward(snap.h, state.v, tau_motion)
        warm = self.qp_warm if same else None
        try:
            cs = constraint_space_torques(dyn, snap.M, snap.h, qdd, tau_motion, self.cc.mu,
                                          model.torque_limits, warm_start=warm)
        except ContactQpError as exc:
            raise SolverFault(str(exc)) from exc
        self.qp_warm = cs.qp.active if cs.feasible else None
        tau = tau_motion + cs.tau_constraint
        clock.t["qp"] = time.perf_counter() - t0

        self.P_prev = dyn.P
        self.prev_stance = stance
        clock.t["total"] = time.perf_counter() - t_start
        return TickOutput(tau, stance, X, X_des, com.copy(), com_vel.copy(), ref,
                          np.array(self.zmp, dtype=float), cs.lambda_c, K, res, hmax,
                          cs.feasible, cs.qp.iterations, held, qdd, a_ff, clock.t)

    def _rotated_nominal(self, foot):
        c, s = np.cos(self.geom.dtheta), np.sin(self.geom.dtheta)
        n = self._nominal_feet[foot]
        return np.array([c * n[0] - s * n[1], s * n[0] + c * n[1]])

    def _swing_torque(self, snap, swing_refs, state):
        from ..lqr import swing_impedance_torque
        if not swing_refs:
            return np.zeros(self.model.nv)
        return swing_impedance_torque(self.model, snap, swing_refs, self.swing_gains, state.v)

    def _gains(self, state, tau0, dyn, idx, swing_feet, X_des, X):
        """Linearize, synthesize the gain and return the base torque."""
        tl = {}
        t0 = time.perf_counter()
        if self.cc.type == "pd":
            B = input_matrix(dyn)
            w = self._weights(swing_feet)
            tl["linearize"] = time.perf_counter() - t0
            tl["care"] = 0.0
            tau = pd_torque(B, X_des, X, tau0, self.cc.pd_kp, self.cc.pd_kd, w.R)
            return tau, None, 0.0, float("nan"), False, tl
        lin = linearize_base(self.model, state, tau0, dyn, idx, eps=self.cc.eps)
        tl["linearize"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        w = self._weights(swing_feet)
        held = False
        try:
            P_init = self.prev_care.P if self.prev_care is not None else None
            care = solve_care(lin.A, lin.B, w.Q, w.R, P_init=P_init)
            K = care.K
            res = care.residual
            self.prev_care = care
            self.K_last = K
            self.held = 0
        except CareError as exc:
            self.held += 1
            if self.K_last is None or self.held > self.cc.hold_cycles:
                raise SolverFault(f"gain synthesis failed for {self.held} cycles: {exc}") from exc
            K = self.K_last
            res = float("nan")
            held = True
        tl["care"] = time.perf_counter() - t0
        tau = lqr_torque(K, X_des, X, tau0)
        # closed-loop spectrum is a diagnostic, kept out of the stage timing
        hmax = float(np.max(np.linalg.eigvals(lin.A - lin.B @ K).real))
        return tau, K, res, hmax, held, tl

    def _weights(self, swing_feet):
        w = self._wcache.get(swing_feet)
        if w is None:
            w = stance_weights(self.model, swing_feet, self.cc.q_pose, self.cc.q_rate, self.cc.r,
                               self.cc.swing_scale)
            self._wcache[swing_feet] = w
        return w


def standing_state(model: RobotModel, terrain_height: float = 0.0) -> GeneralizedState:
    """Nominal pose with the feet just touching flat ground at ``terrain_height``."""
    s = model.nominal_state()
    snap = snapshot(model, s)
    s.base_position = s.base_position.copy()
    s.base_position[2] += terrain_height - float(np.min(snap.foot_pos[:, 2])) + 0.0
    s.base_orientation = quat_from_euler([0.0, 0.0, 0.0])
    return s


__all__ = ["CONTROL_PERIOD", "LocomotionController", "STAGES", "SolverFault", "TickOutput",
           "standing_state", "other_pair"]
