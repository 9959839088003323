"""Dense quadratic programs: equality KKT solves and a dual active-set method.

Problems have the form::

    minimize    1/2 x'Hx + g'x
    subject to  Aeq x  = beq
                Aineq x <= bineq

Multipliers follow the sign convention ``Hx + g + Aeq'lam_eq + Aineq'lam_in = 0``
with ``lam_in >= 0``.

The inequality solver is the Goldfarb-Idnani dual method.  It starts from the
unconstrained minimizer and adds violated constraints one at a time, always
picking the lowest-index violated one, so results are deterministic.  It needs
H positive definite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"

_STATUS = {0: OPTIMAL, 1: INFEASIBLE, 2: MAX_ITER}


class QpError(ValueError):
    """Raised for ill-posed problems (singular KKT system, non-convex H)."""


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None
    Aineq: np.ndarray | None = None
    bineq: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float).ravel()
        n = self.g.shape[0]
        if self.H.shape != (n, n):
            raise QpError(f"H has shape {self.H.shape}, expected {(n, n)}")
        if np.max(np.abs(self.H - self.H.T), initial=0.0) > 1e-9 * (1 + np.abs(self.H).max(initial=0)):
            raise QpError("H is not symmetric")
        self.Aeq, self.beq = _rows(self.Aeq, self.beq, n, "equality")
        self.Aineq, self.bineq = _rows(self.Aineq, self.bineq, n, "inequality")

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def meq(self) -> int:
        return self.Aeq.shape[0]

    @property
    def m(self) -> int:
        return self.Aineq.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


def _rows(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[0] == 0:
        return np.zeros((0, n)), np.zeros(0)
    if A.shape[1] != n or b.shape[0] != A.shape[0]:
        raise QpError(f"{what} constraints have inconsistent shapes {A.shape}, {b.shape}")
    return A, b


@dataclass
class QpSolution:
    x: np.ndarray
    lam_eq: np.ndarray
    lam_ineq: np.ndarray
    active: tuple
    status: str
    iterations: int = 0
    objective: float = float("nan")
    kkt: dict = field(default_factory=dict)


# ------------------------------------------------------------ equality QPs

def solve_equality_qp(H, g, Aeq=None, beq=None) -> QpSolution:
    """Solve the KKT system of an equality-constrained QP directly."""
    prob = QpProblem(H, g, Aeq, beq)
    n, p = prob.n, prob.meq
    K = np.zeros((n + p, n + p))
    K[:n, :n] = prob.H
    K[:n, n:] = prob.Aeq.T
    K[n:, :n] = prob.Aeq
    rhs = np.concatenate([-prob.g, prob.beq])
    rank = np.linalg.matrix_rank(K)
    if rank < n + p:
        raise QpError(f"singular KKT matrix: rank {rank} < {n + p}")
    sol = np.linalg.solve(K, rhs)
    x = sol[:n]
    return QpSolution(x, sol[n:], np.zeros(0), tuple(), OPTIMAL, 0, prob.objective(x),
                      kkt_residuals(prob, x, sol[n:], np.zeros(0)))


# ------------------------------------------------------------ active set

@njit(cache=True)
def _chol_solve(L, b):
    n = L.shape[0]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x


@njit(cache=True)
def _dual_active_set(H, g, C, d, meq, max_iter, tol):
    """Goldfarb-Idnani on rows ``C x = d`` (first ``meq``) and ``C x <= d``.

    Internally every constraint is written as ``N_i'x >= b_i``.  Returns
    (x, lam, active, nact, status, iterations) with status 0 optimal,
    1 infeasible, 2 iteration cap.
    """
    n = H.shape[0]
    m = C.shape[0]
    L = np.linalg.cholesky(H)
    x = -_chol_solve(L, g)
    lam = np.zeros(m)
    act = np.empty(n, dtype=np.int64)
    sign = np.ones(m)
    u = np.zeros(n)
    Na = np.zeros((n, n))
    HiN = np.zeros((n, n))
    nact = 0
    it = 0
    next_eq = 0
    npv = np.empty(n)
    status = 0
    while True:
        p = -1
        if next_eq < meq:
            p = next_eq
            next_eq += 1
            r = -d[p]
            for k in range(n):
                r += C[p, k] * x[k]
            sign[p] = -1.0 if r > 0 else 1.0
        else:
            for i in range(meq, m):
                r = -d[i]
                for k in range(n):
                    r += C[i, k] * x[k]
                if r > tol * (1.0 + abs(d[i])):
                    inset = False
                    for a in range(nact):
                        if act[a] == i:
                            inset = True
                    if not inset:
                        p = i
                        sign[p] = -1.0
                        break
        if p < 0:
            break
        for k in range(n):
            npv[k] = sign[p] * C[p, k]
        bp = sign[p] * d[p]
        Hin = _chol_solve(L, npv)
        added = False
        while not added:
            it += 1
            if it > max_iter:
                status = 2
                break
            z = Hin.copy()
            rr = np.zeros(nact)
            if nact > 0:
                S = np.empty((nact, nact))
                rhs = np.empty(nact)
                for a in range(nact):
                    for b in range(nact):
                        s = 0.0
                        for k in range(n):
                            s += Na[k, a] * HiN[k, b]
                        S[a, b] = s
                    s = 0.0
                    for k in range(n):
                        s += Na[k, a] * Hin[k]
                    rhs[a] = s
                rr = np.linalg.solve(S, rhs)
                for a in range(nact):
                    for k in range(n):
                        z[k] -= HiN[k, a] * rr[a]
            zn = 0.0
            nn = 0.0
            slack = -bp
            for k in range(n):
                zn += z[k] * npv[k]
                nn += Hin[k] * npv[k]
                slack += npv[k] * x[k]
            # near-parallel rows would make the active-set Gram matrix singular
            dependent = zn <= 1e-9 * nn
            t1 = np.inf
            l = -1
            for a in range(nact):
                if act[a] >= meq and rr[a] > 1e-14:
                    t = u[a] / rr[a]
                    if t < t1:
                        t1 = t
                        l = a
            t2 = np.inf if dependent else -slack / zn
            if p < meq and dependent:
                if abs(slack) <= 1e3 * tol * (1.0 + abs(bp)):
                    break  # redundant equality, nothing to add
                status = 1
                break
            if p < meq:
                t1 = np.inf
            t = min(t1, t2)
            if t == np.inf:
                status = 1
                break
            for a in range(nact):
                u[a] -= t * rr[a]
            if t2 < np.inf:
                for k in range(n):
                    x[k] += t * z[k]
            if t2 <= t1:
                act[nact] = p
                u[nact] = t + lam[p]
                lam[p] = 0.0
                for k in range(n):
                    Na[k, nact] = npv[k]
                    HiN[k, nact] = Hin[k]
                nact += 1
                added = True
            else:
                # partial step: keep the accumulated multiplier of p, drop l
                lam[p] += t
                for a in range(l, nact - 1):
                    act[a] = act[a + 1]
                    u[a] = u[a + 1]
                    for k in range(n):
                        Na[k, a] = Na[k, a + 1]
                        HiN[k, a] = HiN[k, a + 1]
                nact -= 1
        if status != 0:
            break
    lam[:] = 0.0
    for a in range(nact):
        i = act[a]
        lam[i] = u[a] if i >= meq else -sign[i] * u[a]
    return x, lam, act[:nact].copy(), nact, status, it


def kkt_residuals(prob: QpProblem, x, lam_eq, lam_ineq) -> dict:
    """Max-norm KKT residuals of a candidate primal-dual point."""
    r = prob.H @ x + prob.g
    if prob.meq:
        r = r + prob.Aeq.T @ lam_eq
    out = {"stationarity": float(np.max(np.abs(r), initial=0.0)),
           "primal_eq": float(np.max(np.abs(prob.Aeq @ x - prob.beq), initial=0.0)),
           "primal_ineq": 0.0, "dual": 0.0, "complementarity": 0.0}
    if prob.m:
        out["stationarity"] = float(np.max(np.abs(r + prob.Aineq.T @ lam_ineq)))
        s = prob.Aineq @ x - prob.bineq
        out["primal_ineq"] = float(max(0.0, s.max()))
        out["dual"] = float(max(0.0, -lam_ineq.min()))
        out["complementarity"] = float(np.max(np.abs(lam_ineq * s)))
    return out


def _kkt_scale(prob: QpProblem, x) -> float:
    mags = [np.abs(prob.H).max(initial=0.0) * np.abs(x).max(initial=0.0),
            np.abs(prob.g).max(initial=0.0), np.abs(prob.beq).max(initial=0.0),
            np.abs(prob.bineq).max(initial=0.0)]
    return 1.0 + max(mags)


def kkt_satisfied(prob: QpProblem, sol: "QpSolution", tol: float = 1e-8) -> bool:
    return max(sol.kkt.values(), default=0.0) <= tol * _kkt_scale(prob, sol.x)


def _stack(prob):
    C = np.vstack([prob.Aeq, prob.Aineq])
    d = np.concatenate([prob.beq, prob.bineq])
    return np.ascontiguousarray(C), d


def _eqp_on_active(prob: QpProblem, active):
    """Primal-dual point treating ``active`` inequalities as equalities."""
    A = np.vstack([prob.Aeq, prob.Aineq[list(active)]]) if len(active) else prob.Aeq
    b = np.concatenate([prob.beq, prob.bineq[list(active)]]) if len(active) else prob.beq
    n, p = prob.n, A.shape[0]
    K = np.zeros((n + p, n + p))
    K[:n, :n] = prob.H
    K[:n, n:] = A.T
    K[n:, :n] = A
    sol = np.linalg.lstsq(K, np.concatenate([-prob.g, b]), rcond=1e-13)[0]
    lam_in = np.zeros(prob.m)
    lam_in[list(active)] = sol[n + prob.meq:]
    return sol[:n], sol[n:n + prob.meq], lam_in


def solve_active_set(problem: QpProblem, warm_start=None, max_iter: int | None = None,
                     tol: float = 1e-8) -> QpSolution:
    """Strictly convex QP with equality and inequality constraints.

    ``warm_start`` is a previous solution (or a sequence of inequality
    indices).  The guessed active set is tried first and kept only if it
    passes the KKT test, so warm starts change the work done but never the
    optimum.  ``tol`` bounds the scaled KKT residuals of an optimal result.
    """
    prob = problem
    n, m, meq = prob.n, prob.m, prob.meq
    if n == 0:
        return QpSolution(np.zeros(0), np.zeros(meq), np.zeros(m), tuple(), OPTIMAL)
    try:
        np.linalg.cholesky(prob.H)
    except np.linalg.LinAlgError:
        raise QpError("H must be positive definite for the dual active-set method") from None
    if warm_start is not None:
        guess = warm_start.active if isinstance(warm_start, QpSolution) else tuple(warm_start)
        guess = tuple(sorted(int(i) for i in guess if 0 <= int(i) < m))
        x, le, li = _eqp_on_active(prob, guess)
        sol = QpSolution(x, le, li, guess, OPTIMAL, 0, prob.objective(x),
                         kkt_residuals(prob, x, le, li))
        if kkt_satisfied(prob, sol, tol):
            return sol
    if max_iter is None:
        max_iter = 10 * (n + m + meq)
    C, d = _stack(prob)
    try:
        x, lam, act, nact, code, iters = _dual_active_set(prob.H, prob.g, C, d, meq,
                                                          max_iter, 1e-12)
    except np.linalg.LinAlgError:
        x = np.linalg.solve(prob.H, -prob.g)
        return QpSolution(x, np.zeros(meq), np.zeros(m), tuple(), MAX_ITER, 0,
                          prob.objective(x), kkt_residuals(prob, x, np.zeros(meq), np.zeros(m)))
    active = tuple(sorted(int(i) - meq for i in act if i >= meq))
    sol = QpSolution(x, lam[:meq], lam[meq:], active, _STATUS[int(code)], int(iters),
                     prob.objective(x), kkt_residuals(prob, x, lam[:meq], lam[meq:]))
    if sol.status == OPTIMAL and not kkt_satisfied(prob, sol, tol):
        # one refinement on the final active set before giving up on accuracy
        x, le, li = _eqp_on_active(prob, active)
        ref = QpSolution(x, le, li, active, OPTIMAL, sol.iterations, prob.objective(x),
                         kkt_residuals(prob, x, le, li))
        sol = ref if kkt_satisfied(prob, ref, tol) else QpSolution(
            sol.x, sol.lam_eq, sol.lam_ineq, active, MAX_ITER, sol.iterations,
            sol.objective, sol.kkt)
    return sol
