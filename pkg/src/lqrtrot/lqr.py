"""Base linearization, Riccati gain synthesis and the base and swing torque laws.

The base state is ``X = [p_I, rpy, v_I, w_B]`` with Z-Y-X Euler angles stored
as (roll, pitch, yaw).  The linear model is

    d/dt [x_b; xd_b] = [[0, I], [A21, A22]] [x_b; xd_b] + [0; B2] tau

obtained by differencing the projected base accelerations around the
current configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .model import GRAVITY, GeneralizedState, RobotModel, bias_forces, euler_zyx, mass_matrix
from .model import _kernels as K
from .projection import SIGMA_TOL, ProjectedDynamics

PITCH_MARGIN = 0.2


class CareError(RuntimeError):
    """The Riccati iteration did not reach the requested accuracy."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


def base_state(state: GeneralizedState) -> np.ndarray:
    rpy = euler_zyx(state.base_orientation)
    if abs(rpy[1]) > np.pi / 2 - PITCH_MARGIN:
        raise ValueError(f"pitch {rpy[1]:.3f} rad too close to the Euler singularity")
    return np.concatenate([state.base_position, rpy, state.v[:6]])


def state_error(X_des, X) -> np.ndarray:
    """``X_des - X`` with Euler differences wrapped to (-pi, pi]."""
    e = np.asarray(X_des, dtype=float) - np.asarray(X, dtype=float)
    e[3:6] = (e[3:6] + np.pi) % (2 * np.pi) - np.pi
    return e


# ------------------------------------------------------------ statics and dynamics

def gravity_compensation(model: RobotModel, state: GeneralizedState, dyn: ProjectedDynamics,
                         gravity=GRAVITY, base_acc=None, M=None) -> np.ndarray:
    """Actuated torques reproducing gravity inside the constraint-free subspace.

    Least squares ``min |P S tau - P (h_grav + M a)|``; the minimum-norm
    solution is taken when ``P S`` is rank deficient.  ``a`` is zero unless a
    horizontal base acceleration ``base_acc`` is requested, in which case the
    joint rows follow from keeping the stance feet at rest.
    """
    s0 = state.copy()
    s0.v = np.zeros_like(state.v)
    hg = bias_forces(model, s0, gravity)
    rhs = hg
    if base_acc is not None:
        a = np.zeros(model.nv)
        a[:2] = base_acc
        Jc = dyn.Jc
        if Jc.shape[0]:
            a[6:] = -np.linalg.lstsq(Jc[:, 6:], Jc[:, :6] @ a[:6], rcond=1e-10)[0]
        M = mass_matrix(model, state) if M is None else M
        rhs = hg + M @ a
    PS = dyn.P[:, 6:]
    tau = np.zeros(model.nv)
    tau[6:] = np.linalg.lstsq(PS, dyn.P @ rhs, rcond=1e-10)[0]
    return tau


def base_forward_dynamics(model: RobotModel, state: GeneralizedState, tau, dyn: ProjectedDynamics,
                          h=None, gravity=GRAVITY) -> np.ndarray:
    """Base rows of the constraint-consistent accelerations."""
    if h is None:
        h = bias_forces(model, state, gravity)
    return dyn.forward(h, state.v, np.asarray(tau, dtype=float))[:6]


@dataclass
class LinearizedBase:
    A: np.ndarray
    B: np.ndarray

    @property
    def A21(self):
        return self.A[6:, :6]

    @property
    def A22(self):
        return self.A[6:, 6:]

    @property
    def B2(self):
        return self.B[6:]


def input_matrix(dyn: ProjectedDynamics) -> np.ndarray:
    """``B2 = J_b Mc^-1 P S`` (6 x nv)."""
    return np.linalg.solve(dyn.M_c, dyn.P @ dyn.S)[:6]


def linearize_base(model: RobotModel, state0: GeneralizedState, tau0, dyn: ProjectedDynamics,
                   feet, eps: float = 1e-5, gravity=GRAVITY,
                   sigma_tol: float = SIGMA_TOL) -> LinearizedBase:
    """Central-difference linearization of the base accelerations.

    ``feet`` are the indices of the stance feet.  Orientation columns perturb
    the Euler angles, velocity columns the mixed base velocity; ``P_dot`` is
    held at its current estimate.
    """
    feet = np.asarray(feet, dtype=np.int64)
    A21_22 = K.linearize_core(*model.kernel_args(), model.foot_link, model.foot_offset, feet,
                              state0.base_position, state0.base_orientation, state0.q_j,
                              state0.v, np.asarray(tau0, dtype=float), dyn.P_dot,
                              np.asarray(gravity, dtype=float), sigma_tol, eps)
    A = np.zeros((12, 12))
    A[:6, 6:] = np.eye(6)
    A[6:] = A21_22
    B = np.zeros((12, model.nv))
    B[6:] = input_matrix(dyn)
    return LinearizedBase(A, B)


# ------------------------------------------------------------ Riccati

@dataclass
class LqrWeights:
    Q: np.ndarray
    R: np.ndarray
    swing_scale: float = 10.0

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T)).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(0.5 * (self.R + self.R.T)).min() <= 0:
            raise ValueError("R must be positive definite")
        if self.swing_scale < 1:
            raise ValueError("swing_scale must be at least 1")


def stance_weights(model: RobotModel, swing_feet=(), q_pose: float = 1500.0,
                   q_rate: float = 1.0, r: float = 0.03, swing_scale: float = 10.0) -> LqrWeights:
    """Diagonal weights with swing-leg torques made ``swing_scale`` times dearer."""
    Q = np.diag([q_pose] * 6 + [q_rate] * 6)
    rd = np.full(model.nv, r)
    for f in swing_feet:
        rd[model.leg_joints(f)] *= swing_scale
    return LqrWeights(Q, np.diag(rd), swing_scale)


def care_residual(A, B, Q, R, P, BRB=None) -> float:
    """Relative Frobenius residual of the continuous algebraic Riccati equation."""
    if BRB is None:
        BRB = B @ np.linalg.solve(R, B.T)
    res = A.T @ P + P @ A - P @ BRB @ P + Q
    return float(np.linalg.norm(res) / max(np.linalg.norm(Q), 1e-300))


def _is_hurwitz(M) -> bool:
    return bool(np.max(np.linalg.eigvals(M).real) < 0)


def _bass_gain(A, B, Rinv):
    """Stabilizing gain from a shifted controllability Lyapunov equation."""
    beta = np.linalg.norm(A, 2) + 1.0
    As = A + beta * np.eye(A.shape[0])
    Z = sla.solve_continuous_lyapunov(As, 2.0 * B @ Rinv @ B.T)
    return Rinv @ B.T @ np.linalg.solve(Z, np.eye(A.shape[0]))


@dataclass
class CareResult:
    P: np.ndarray
    K: np.ndarray
    residual: float
    iterations: int
    history: list = field(default_factory=list)
    warm: bool = False


def solve_care(A, B, Q, R, P_init=None, max_iter: int = 50, tol: float = 1e-8) -> CareResult:
    """Stabilizing CARE solution by Newton-Kleinman iteration.

    ``P_init`` (the previous cycle's solution) seeds the first gain when it
    is stabilizing; otherwise the seed comes from Bass's method, and as a
    last resort from a Schur-method solve.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Rinv = np.linalg.inv(R)
    Rinv = 0.5 * (Rinv + Rinv.T)
    BRB = B @ Rinv @ B.T
    K = None
    warm = False
    if P_init is not None:
        K0 = Rinv @ B.T @ P_init
        if _is_hurwitz(A - B @ K0):
            K, warm = K0, True
    if K is None:
        try:
            K0 = _bass_gain(A, B, Rinv)
            if np.all(np.isfinite(K0)) and _is_hurwitz(A - B @ K0):
                K = K0
        except (np.linalg.LinAlgError, ValueError):
            pass
    if K is None:
        try:
            P0 = sla.solve_continuous_are(A, B, Q, R)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise CareError(f"no stabilizing initial gain: {exc}", []) from exc
        K = Rinv @ B.T @ P0
    history = []
    P = None
    for it in range(1, max_iter + 1):
        Acl = A - B @ K
        P = sla.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        P = 0.5 * (P + P.T)
        K = Rinv @ B.T @ P
        res = care_residual(A, B, Q, R, P, BRB)
        history.append(res)
        if not np.isfinite(res):
            break
        if res < tol:
            return CareResult(P, K, res, it, history, warm)
        # stalls at round-off level are as good as it gets
        if it > 3 and res > 0.5 * history[-2] and res < 10 * tol:
            break
    raise CareError(f"Newton-Kleinman did not converge (last residual {history[-1]:.3g})",
                    history)


def lqr_torque(K, X_des, X, tau0) -> np.ndarray:
    """``tau_m2 = K (X_des - X) + tau0``."""
    return np.asarray(K) @ state_error(X_des, X) + np.asarray(tau0)


def pd_torque(B, X_des, X, tau0, kp, kd, R=None) -> np.ndarray:
    """Diagonal-gain baseline: the base acceleration ``kp e + kd ed`` through the
    R-weighted pseudo-inverse of the input matrix."""
    B2 = np.asarray(B)[-6:]
    e = state_error(X_des, X)
    a = np.asarray(kp) * e[:6] + np.asarray(kd) * e[6:]
    Rinv = np.eye(B2.shape[1]) if R is None else np.linalg.inv(R)
    BRB = B2 @ Rinv @ B2.T
    tau = Rinv @ B2.T @ np.linalg.lstsq(BRB, a, rcond=1e-12)[0]
    return tau + np.asarray(tau0)


# ------------------------------------------------------------ swing legs

@dataclass(frozen=True)
class SwingGains:
    kp: tuple = (2000.0, 2000.0, 2000.0)
    kd: tuple = (60.0, 60.0, 60.0)
    feedforward: bool = True
    damping: float = 0.02


def swing_impedance_torque(model: RobotModel, snap, swing_refs: dict, gains: SwingGains,
                           qd: np.ndarray) -> np.ndarray:
    """Cartesian impedance for each swing foot, mapped through the leg Jacobian.

    ``snap`` is a :class:`~lqrtrot.model.DynamicsSnapshot` of the current
    state and ``qd`` the generalized velocity.  The feedforward term maps the
    reference acceleration through the leg's own inertia, using a damped
    inverse so a stretched leg near its reach limit does not demand unbounded
    joint accelerations.  Leg gravity is not added here because the gravity
    compensation torque already carries it.
    """
    tau = np.zeros(model.nv)
    kp = np.asarray(gains.kp)
    kd = np.asarray(gains.kd)
    for foot, ref in swing_refs.items():
        i = model.foot_index(foot)
        cols = model.leg_joints(foot)
        J = snap.J_feet[3 * i:3 * i + 3]
        e = ref.position - snap.foot_pos[i]
        ed = ref.velocity - snap.foot_vel[i]
        Jl = J[:, cols]
        t = Jl.T @ (kp * e + kd * ed)
        if gains.feedforward:
            # a_ref = J qdd + Jdot qd  ->  leg-local qdd
            a = ref.acceleration - snap.foot_bias_acc[i]
            lam2 = gains.damping ** 2
            qdd = Jl.T @ np.linalg.solve(Jl @ Jl.T + lam2 * np.eye(3), a)
            t = t + snap.M[np.ix_(cols, cols)] @ qdd
        tau[cols] += t
    return tau
