"""Linear inverted pendulum propagation and the N-step ZMP planner.

Along one horizontal axis the CoM obeys ``xdd = omega^2 (x - p)`` with the
ZMP ``p`` held constant over a step.  The planner chooses the ZMPs of the
next N steps so that the CoM velocity at every touchdown approaches a
desired value while the ZMP moves smoothly.  The two axes are independent.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr, solve_triangular


@dataclass(frozen=True)
class LipmParams:
    z_com: float = 0.42
    g: float = 9.8

    def __post_init__(self):
        if not (self.z_com > 0 and self.g > 0):
            raise ValueError(f"z_com and g must be positive, got {self.z_com}, {self.g}")

    @property
    def omega(self) -> float:
        return float(np.sqrt(self.g / self.z_com))


@dataclass(frozen=True)
class AxisState:
    pos: float
    vel: float

    def __post_init__(self):
        if not (np.isfinite(self.pos) and np.isfinite(self.vel)):
            raise ValueError("axis state must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.pos, self.vel])


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, step durations and weights for one axis.

    ``T_s``, ``Q`` and ``R`` may be scalars (shared by all steps) or
    length-N sequences.
    """

    N: int = 3
    T_s: float | tuple = 0.3
    Q: float | tuple = 1000.0
    R: float | tuple = 1.0
    t0: float = 0.0
    p0: float = 0.0
    v_des: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon N must be at least 1")
        for name in ("T_s", "Q", "R"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (self.N,))
            object.__setattr__(self, name, tuple(float(a) for a in arr))
        if min(self.T_s) <= 0:
            raise ValueError("step durations must be positive")
        if min(self.Q) < 0 or min(self.R) <= 0:
            raise ValueError("need Q_i >= 0 and R_i > 0")
        if self.t0 < 0 or self.t0 > max(self.T_s) + 1e-12:
            raise ValueError(f"remaining swing time t0={self.t0} outside [0, T_s]")


@dataclass(frozen=True)
class ZmpPlan:
    p_star: np.ndarray
    states: np.ndarray  # (N, 2): predicted [pos, vel] at the end of each step

    @property
    def first(self) -> float:
        return float(self.p_star[0])


def lipm_transition(t: float, omega: float):
    """Closed-form state transition ``x(t) = A x0 + B p`` for a fixed ZMP."""
    if t < 0:
        raise ValueError("t must be non-negative")
    c = np.cosh(omega * t)
    s = np.sinh(omega * t)
    A = np.array([[c, s / omega], [omega * s, c]])
    B = np.array([1.0 - c, -omega * s])
    return A, B


def predict_touchdown_state(x0: AxisState, p0: float, t0: float, params: LipmParams) -> AxisState:
    """Propagate the current state to the end of the current swing."""
    A, B = lipm_transition(t0, params.omega)
    x = A @ x0.as_array() + B * p0
    return AxisState(float(x[0]), float(x[1]))


class FootstepPlanner:
    """Condensed N-step planner with the Hessian factorized once.

    The dynamics recursion is substituted into the cost so the problem is an
    unconstrained quadratic in the N ZMPs.  Everything except the current
    state, previous ZMP and velocity target is fixed at construction.
    Work is done in coordinates relative to the previous ZMP, so a balanced
    state maps to a zero gradient and the plan returns ``p0`` exactly.
    """

    def __init__(self, T_s, Q, R, params: LipmParams):
        self.T_s = np.asarray(T_s, dtype=float)
        self.N = N = len(self.T_s)
        self.Q = np.asarray(Q, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.params = params
        w = params.omega
        # state after step i: Phi[i] x0 + sum_j Gam[i, j] p_j
        self.Phi = np.zeros((N, 2, 2))
        self.Gam = np.zeros((N, N, 2))
        Acum = np.eye(2)
        mats = [lipm_transition(t, w) for t in self.T_s]
        for i in range(N):
            A, B = mats[i]
            Acum = A @ Acum
            self.Phi[i] = Acum
            for j in range(i + 1):
                if j == i:
                    self.Gam[i, j] = B
                else:
                    self.Gam[i, j] = A @ self.Gam[i - 1, j]
        self.Gv = self.Gam[:, :, 1]  # velocity rows
        D = np.eye(N) - np.eye(N, k=-1)
        self._D = D
        self.H = self.Gv.T @ (self.Q[:, None] * self.Gv) + D.T @ (self.R[:, None] * D)
        # H = U^T U with U from a QR of the square-root cost matrix; this avoids
        # squaring the condition number, which reaches 1e11 for long horizons
        self._sqrt_q = np.sqrt(self.Q)
        M = np.vstack([self._sqrt_q[:, None] * self.Gv, np.sqrt(self.R)[:, None] * D])
        self._qt, self._U = qr(M, mode="economic")
        self._qt = self._qt[:N].T  # only the Q-rows carry a right-hand side

    @classmethod
    def from_config(cls, cfg: MpcConfig, params: LipmParams) -> "FootstepPlanner":
        return cls(cfg.T_s, cfg.Q, cfg.R, params)

    def gradient(self, x_rel: np.ndarray, v_des: float) -> np.ndarray:
        c = self.Phi[:, 1, :] @ x_rel
        return self.Gv.T @ (self.Q * (c - v_des))

    def plan(self, x_td: AxisState, p0: float, v_des: float) -> ZmpPlan:
        x_rel = np.array([x_td.pos - p0, x_td.vel])
        c = self.Phi[:, 1, :] @ x_rel
        p_rel = solve_triangular(self._U, self._qt @ (self._sqrt_q * (v_des - c)))
        p = p_rel + p0
        states = self.Phi @ x_rel + np.einsum("ijk,j->ik", self.Gam, p_rel)
        states[:, 0] += p0
        return ZmpPlan(p, states)

    def kkt_residual(self, x_td: AxisState, p0: float, v_des: float, p_star) -> float:
        """Max-norm residual of the condensed optimality condition, relative to
        the size of its two terms (absolute when both are below one)."""
        x_rel = np.array([x_td.pos - p0, x_td.vel])
        hp = self.H @ (np.asarray(p_star) - p0)
        gr = self.gradient(x_rel, v_des)
        scale = max(1.0, float(np.max(np.abs(hp))), float(np.max(np.abs(gr))))
        return float(np.max(np.abs(hp + gr))) / scale


def plan_footsteps(x_td: AxisState, cfg: MpcConfig, params: LipmParams) -> ZmpPlan:
    """One-shot planner call; see :class:`FootstepPlanner` for the cached form."""
    return FootstepPlanner.from_config(cfg, params).plan(x_td, cfg.p0, cfg.v_des)


def recursion_residual(plan: ZmpPlan, x_td: AxisState, T_s, params: LipmParams) -> float:
    """Largest deviation of the plan's states from the step recursion."""
    x = x_td.as_array()
    worst = 0.0
    for i, t in enumerate(np.broadcast_to(np.asarray(T_s, dtype=float), plan.p_star.shape)):
        A, B = lipm_transition(t, params.omega)
        x = A @ x + B * plan.p_star[i]
        worst = max(worst, float(np.max(np.abs(x - plan.states[i]))))
        x = plan.states[i]
    return worst
