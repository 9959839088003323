"""Orthogonal split of floating-base dynamics and constraint-space torques.

With ``P = I - Jc^+ Jc`` the equations of motion separate into

    P (M qdd + h)       = P S tau                      (constraint-free)
    (I - P)(M qdd + h)  = (I - P) S tau + Jc' lam      (constraint)

Motion control acts through the first line.  The second line fixes the
contact forces; the actuated torques that shape them are chosen by a small
QP that keeps forces in the friction pyramid and torques within limits.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import _kernels as K
from .qp import OPTIMAL, QpProblem, QpSolution, solve_active_set

SIGMA_TOL = 1e-6


class ConditioningWarning(RuntimeWarning):
    """Constrained inertia matrix is badly conditioned."""


class ContactQpError(RuntimeError):
    """Even the relaxed contact-force QP did not reach an optimum."""


def pseudo_inverse(Jc, sigma_tol: float = SIGMA_TOL) -> np.ndarray:
    """Moore-Penrose inverse with singular values below ``sigma_tol * s_max`` dropped."""
    Jc = np.ascontiguousarray(Jc, dtype=float)
    return K.pinv_trunc(Jc, sigma_tol)


def projection_matrix(Jc, sigma_tol: float = SIGMA_TOL) -> np.ndarray:
    """Orthogonal projector onto the null space of ``Jc``."""
    Jc = np.ascontiguousarray(Jc, dtype=float)
    return K.projector(Jc, sigma_tol)


def selection_matrix(nv: int) -> np.ndarray:
    S = np.eye(nv)
    S[:6, :6] = 0.0
    return S


@dataclass
class ProjectedDynamics:
    P: np.ndarray
    P_dot: np.ndarray
    M_c: np.ndarray
    S: np.ndarray
    Jc: np.ndarray
    cond: float

    def forward(self, h, v, tau) -> np.ndarray:
        """Constraint-consistent accelerations ``Mc^-1 (-P h + Pdot v + P S tau)``."""
        rhs = self.P @ (self.S @ tau - h) + self.P_dot @ v
        return np.linalg.solve(self.M_c, rhs)


def projected_dynamics(M, h, Jc, P_prev=None, dt: float = 0.0025,
                       sigma_tol: float = SIGMA_TOL, cond_limit: float = 1e8) -> ProjectedDynamics:
    """Assemble ``P``, its backward-difference rate and ``M_c = PM + I - P``.

    ``P_prev`` of ``None`` (first cycle, or the stance just changed) gives a
    zero rate.
    """
    M = np.asarray(M, dtype=float)
    nv = M.shape[0]
    Jc = np.ascontiguousarray(Jc, dtype=float).reshape(-1, nv)
    P = projection_matrix(Jc, sigma_tol)
    P_dot = np.zeros_like(P) if P_prev is None else (P - P_prev) / dt
    Mc = K.constrained_inertia(P, M)
    cond = float(np.linalg.cond(Mc))
    if cond > cond_limit:
        warnings.warn(f"constrained inertia condition number {cond:.3g}", ConditioningWarning)
    return ProjectedDynamics(P, P_dot, Mc, selection_matrix(nv), Jc, cond)


@dataclass
class ContactForceSolution:
    lambda_c: np.ndarray
    tau_constraint: np.ndarray
    feasible: bool
    qp: QpSolution | None = None
    problem: QpProblem | None = None


def _equal_share(lam0, k):
    f = lam0.reshape(k, 3)
    return np.tile(f.mean(axis=0), k)


def _friction_rows(k, mu):
    """Rows ``G`` with ``G lam <= 0`` for unilateral contact and a 4-face pyramid."""
    c = mu / np.sqrt(2.0)
    G = np.zeros((5 * k, 3 * k))
    for i in range(k):
        r = 5 * i
        x, y, z = 3 * i, 3 * i + 1, 3 * i + 2
        G[r, z] = -1.0
        G[r + 1, x], G[r + 1, z] = 1.0, -c
        G[r + 2, x], G[r + 2, z] = -1.0, -c
        G[r + 3, y], G[r + 3, z] = 1.0, -c
        G[r + 4, y], G[r + 4, z] = -1.0, -c
    return G


def _independent_rows(E, e, tol=1e-9):
    """Row-reduce a consistent linear system by SVD, keeping its rank."""
    U, s, Vt = np.linalg.svd(E, full_matrices=False)
    r = int(np.sum(s > tol * max(s[0], 1e-300))) if s.size else 0
    return (s[:r, None] * Vt[:r]), U[:, :r].T @ e


def constraint_space_torques(dyn: ProjectedDynamics, M, h, qdd_cmd, tau_motion, mu: float,
                             limits, weights=None, warm_start=None,
                             fallback_weight: float = 1e4) -> ContactForceSolution:
    """Contact forces and constraint-subspace torques for the commanded motion.

    The torque ``tau_c`` lives in the constraint subspace (``P S tau_c = 0``)
    and is written as ``S tau_c = Jc' w``.  Forces follow as
    ``lam = lam0 - w`` where ``lam0`` explains the constraint part of the
    dynamics under ``tau_motion`` alone.  Requiring zero base rows of
    ``Jc' w`` keeps the base wrench exact; ``w`` is then chosen as close as
    possible to an equal share of the load per foot, subject to the friction
    pyramid, unilateral contact and joint torque limits on the total command.

    If that QP is infeasible the base wrench is relaxed instead: forces stay
    inside the pyramid, torque-limit violations are penalized, and the
    result is flagged infeasible.
    """
    Jc = dyn.Jc
    nv = Jc.shape[1]
    k = Jc.shape[0] // 3
    if k == 0:
        raise ValueError("constraint-space torques need at least one contact")
    if mu <= 0:
        raise ValueError("friction coefficient must be positive")
    I_P = np.eye(nv) - dyn.P
    r = I_P @ (M @ qdd_cmd + h - dyn.S @ tau_motion)
    lam0 = pseudo_inverse(Jc.T) @ r
    lam_bar = _equal_share(lam0, k)
    W = np.ones(3 * k) if weights is None else np.asarray(weights, dtype=float)

    JT = Jc.T
    Eb, eb = _independent_rows(JT[:6], np.zeros(6))
    G = _friction_rows(k, mu)
    # G (lam0 - w) <= 0   ->   -G w <= -G lam0
    A_f, b_f = -G, -G @ lam0
    lim = np.asarray(limits, dtype=float)
    Jj = JT[6:]
    used = np.any(np.abs(Jj) > 0, axis=1)
    Jj, tm, lj = Jj[used], np.asarray(tau_motion)[6:][used], lim[used]
    A_t = np.vstack([Jj, -Jj])
    b_t = np.concatenate([lj - tm, lj + tm])

    H = np.diag(W)
    g = -W * (lam0 - lam_bar)
    prob = QpProblem(H, g, Eb, eb, np.vstack([A_f, A_t]), np.concatenate([b_f, b_t]))
    sol = solve_active_set(prob, warm_start=warm_start)
    if sol.status == OPTIMAL:
        w = sol.x
        feasible = True
    else:
        prob, sol = _least_violation(W, lam0, lam_bar, Eb, A_f, b_f, A_t, b_t,
                                     fallback_weight)
        w = sol.x[:3 * k]
        feasible = False
    lam = lam0 - w
    tau_c = JT @ w
    tau_c[:6] = 0.0
    return ContactForceSolution(lam, tau_c, feasible, sol, prob)


def _least_violation(W, lam0, lam_bar, Eb, A_f, b_f, A_t, b_t, rho):
    """Relax the base wrench and the torque limits; keep forces in the pyramid."""
    n = W.size
    m_t = A_t.shape[0]
    H = np.zeros((n + m_t, n + m_t))
    H[:n, :n] = np.diag(W) + rho * Eb.T @ Eb
    H[n:, n:] = rho * np.eye(m_t)
    g = np.concatenate([-W * (lam0 - lam_bar), np.zeros(m_t)])
    A = np.vstack([
        np.hstack([A_f, np.zeros((A_f.shape[0], m_t))]),
        np.hstack([A_t, -np.eye(m_t)]),
        np.hstack([np.zeros((m_t, n)), -np.eye(m_t)]),
    ])
    b = np.concatenate([b_f, b_t, np.zeros(m_t)])
    prob = QpProblem(H, g, Aineq=A, bineq=b)
    sol = solve_active_set(prob)
    if sol.status != OPTIMAL:
        raise ContactQpError(f"least-violation contact QP failed: {sol.status}")
    return prob, sol
