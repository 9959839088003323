import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, null_space

from lqrtrot import projection as proj
from lqrtrot.model import ContactSet, GeneralizedState, reference_quadruped, snapshot
from lqrtrot.projection import (ConditioningWarning, ContactQpError, constraint_space_torques,
                                projected_dynamics, projection_matrix, pseudo_inverse,
                                selection_matrix)
from lqrtrot.qp import QpSolution

import oracles as O

MODEL = reference_quadruped()
ALL = ("LF", "RF", "LH", "RH")
TROT = ("LF", "RH")
LIMITS = np.full(MODEL.n, 1e6)


def stance(state, feet):
    sn = snapshot(MODEL, state)
    return sn, sn.jacobian(ContactSet(feet).indices(MODEL))


def random_state(rng, vel_scale=0.0):
    s = MODEL.nominal_state()
    qj = s.q_j + rng.uniform(-0.3, 0.3, MODEL.n)
    quat = O.matrix_to_quat_wxyz(O.rot(rng.normal(size=3), rng.uniform(0, 0.3)))
    return GeneralizedState(s.base_position, quat, qj, rng.normal(scale=vel_scale, size=MODEL.nv))


def displaced(state, v, h):
    """Configuration reached by moving along the mixed velocity ``v`` for ``h``."""
    R = O.quat_wxyz_to_matrix(state.base_orientation) @ expm(O.hat(v[3:6]) * h)
    return GeneralizedState(state.base_position + v[:3] * h, O.matrix_to_quat_wxyz(R),
                            state.q_j + v[6:] * h, v)


def penrose(J, X):
    return max(np.max(np.abs(J @ X @ J - J)), np.max(np.abs(X @ J @ X - X)),
               np.max(np.abs((J @ X).T - J @ X)), np.max(np.abs((X @ J).T - X @ J)))


# ------------------------------------------------------------ pseudo-inverse

def test_pinv_of_zero():
    np.testing.assert_array_equal(pseudo_inverse(np.zeros((6, 18))), np.zeros((18, 6)))


def test_pinv_of_orthonormal_rows():
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(18, 6)))
    np.testing.assert_allclose(pseudo_inverse(Q.T), Q, atol=1e-12)


def test_pinv_penrose_random():
    rng = np.random.default_rng(1)
    for _ in range(50):
        J = rng.normal(size=(6, 18))
        X = pseudo_inverse(J)
        assert penrose(J, X) < 1e-10
        U, s, Vt = np.linalg.svd(J, full_matrices=False)
        np.testing.assert_allclose(X, Vt.T @ np.diag(1 / s) @ U.T, atol=1e-10)


def test_pinv_truncates_rank_deficiency():
    rng = np.random.default_rng(2)
    J = rng.normal(size=(6, 3)) @ rng.normal(size=(3, 18))
    X = pseudo_inverse(J)
    assert penrose(J, X) < 1e-9
    assert np.linalg.matrix_rank(X) == 3


# ------------------------------------------------------------ projector

def test_projector_without_contacts():
    np.testing.assert_array_equal(projection_matrix(np.zeros((0, 18))), np.eye(18))


def test_projector_axis_aligned():
    J = np.hstack([np.eye(3), np.zeros((3, 15))])
    np.testing.assert_allclose(projection_matrix(J), np.diag([0.0] * 3 + [1.0] * 15), atol=1e-15)


def test_trot_stance_trace():
    _, Jc = stance(MODEL.nominal_state(), TROT)
    P = projection_matrix(Jc)
    assert np.linalg.matrix_rank(Jc) == 6
    assert np.trace(P) == pytest.approx(12.0, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([TROT, ("RF", "LH"), ALL, ("LF",)]))
def test_projector_algebra(seed, feet):
    _, Jc = stance(random_state(np.random.default_rng(seed)), feet)
    P = projection_matrix(Jc)
    assert np.max(np.abs(P @ P - P)) < 1e-9
    assert np.max(np.abs(P @ Jc.T)) < 1e-9
    assert np.max(np.abs(P - P.T)) < 1e-12
    assert np.trace(P) == pytest.approx(18 - np.linalg.matrix_rank(Jc), abs=1e-9)


def test_projector_changes_linearly_with_step():
    rng = np.random.default_rng(3)
    s = random_state(rng)
    _, Jc = stance(s, TROT)
    v = null_space(Jc) @ rng.normal(size=12)
    P0 = projection_matrix(Jc)
    d = [np.max(np.abs(projection_matrix(stance(displaced(s, v, h), TROT)[1]) - P0))
         for h in (2e-3, 1e-3)]
    assert d[1] == pytest.approx(d[0] / 2, rel=0.05)


# ------------------------------------------------------------ projected dynamics

def test_static_stance_has_zero_rate():
    sn, Jc = stance(MODEL.nominal_state(), ALL)
    P = projection_matrix(Jc)
    dyn = projected_dynamics(sn.M, sn.h, Jc, P_prev=P)
    np.testing.assert_array_equal(dyn.P_dot, np.zeros((18, 18)))
    assert np.array_equal(projected_dynamics(sn.M, sn.h, Jc).P_dot, np.zeros((18, 18)))


def test_identity_inertia_without_contacts():
    dyn = projected_dynamics(np.eye(18), np.zeros(18), np.zeros((0, 18)))
    np.testing.assert_array_equal(dyn.M_c, np.eye(18))


def test_ill_conditioning_warns():
    M = np.diag([1.0] * 17 + [1e-12])
    with pytest.warns(ConditioningWarning):
        projected_dynamics(M, np.zeros(18), np.zeros((0, 18)))


def test_forward_matches_multiplier_method():
    rng = np.random.default_rng(4)
    for _ in range(5):
        s = random_state(rng)
        sn, Jc = stance(s, TROT)
        v = null_space(Jc) @ rng.normal(scale=0.5, size=12)
        s.v = v
        sn, Jc = stance(s, TROT)
        tau = np.concatenate([np.zeros(6), rng.normal(scale=20, size=12)])
        h = 1e-6
        J_of = lambda st_: stance(st_, TROT)[1]
        Jdot_v = (J_of(displaced(s, v, h)) - J_of(displaced(s, v, -h))) @ v / (2 * h)
        k = Jc.shape[0]
        K = np.block([[sn.M, -Jc.T], [Jc, np.zeros((k, k))]])
        ref = np.linalg.solve(K, np.concatenate([selection_matrix(18) @ tau - sn.h, -Jdot_v]))
        P_prev = projection_matrix(J_of(displaced(s, v, -h)))
        dyn = projected_dynamics(sn.M, sn.h, Jc, P_prev=P_prev, dt=h)
        assert np.max(np.abs(dyn.forward(sn.h, v, tau) - ref[:18])) < 1e-5


# ------------------------------------------------------------ constraint-space torques

def solve(state, feet, qdd, mu, tau_motion=None):
    sn, Jc = stance(state, feet)
    dyn = projected_dynamics(sn.M, sn.h, Jc)
    tm = np.zeros(18) if tau_motion is None else tau_motion
    return dyn, sn, constraint_space_torques(dyn, sn.M, sn.h, qdd, tm, mu, LIMITS)


def test_standing_weight_split():
    _, _, sol = solve(MODEL.nominal_state(), ALL, np.zeros(18), 0.6)
    assert sol.feasible
    f = sol.lambda_c.reshape(4, 3)
    w = MODEL.total_mass * 9.81
    np.testing.assert_allclose(f[:, 2], w / 4, rtol=0.01)
    assert np.max(np.abs(f[:, :2])) < 1e-9


def least_squares_oracle(dyn, M, h, qdd, tau_motion, feet_k):
    """Equation-(10) solutions over (joint torque, forces) nearest the equal
    share of the pseudo-inverse forces, by explicit null-space parametrization."""
    I_P = np.eye(18) - dyn.P
    S = dyn.S[:, 6:]
    r = I_P @ (M @ qdd + h - dyn.S @ tau_motion)
    lam_pinv = np.linalg.pinv(dyn.Jc.T) @ r
    lam_bar = np.tile(lam_pinv.reshape(feet_k, 3).mean(axis=0), feet_k)
    # unknowns x = (tau_c joints, lam):  (I-P) S tau_c + Jc' lam = r,  P S tau_c = 0
    A = np.vstack([np.hstack([I_P @ S, dyn.Jc.T]),
                   np.hstack([dyn.P @ S, np.zeros((18, 3 * feet_k))])])
    b = np.concatenate([r, np.zeros(18)])
    x0 = np.linalg.lstsq(A, b, rcond=None)[0]
    N = null_space(A)
    C = np.hstack([np.zeros((3 * feet_k, 12)), np.eye(3 * feet_k)])
    z = np.linalg.lstsq(C @ N, lam_bar - C @ x0, rcond=None)[0]
    x = x0 + N @ z
    return x[12:], x[:12]


@pytest.mark.parametrize("feet", [ALL, TROT])
def test_large_mu_reproduces_least_squares(feet):
    rng = np.random.default_rng(5)
    s = random_state(rng)
    qdd = rng.normal(scale=0.5, size=18)
    tm = np.concatenate([np.zeros(6), rng.normal(scale=5, size=12)])
    dyn, sn, sol = solve(s, feet, qdd, 1e6, tm)
    assert sol.feasible
    lam, tau_j = least_squares_oracle(dyn, sn.M, sn.h, qdd, tm, len(feet))
    assert np.max(np.abs(sol.lambda_c - lam)) < 1e-6
    assert np.max(np.abs(sol.tau_constraint[6:] - tau_j)) < 1e-6


def test_low_friction_saturates_pyramid():
    qdd = np.zeros(18)
    qdd[1] = 5.0
    _, _, sol = solve(MODEL.nominal_state(), ALL, qdd, 0.1)
    f = sol.lambda_c.reshape(4, 3)
    c = 0.1 / np.sqrt(2)
    assert np.all(f[:, 2] > 0)
    np.testing.assert_allclose(np.abs(f[:, 1]), c * f[:, 2], atol=1e-8)
    p, q = sol.problem, sol.qp
    ok, res = O.kkt_check(p.H, p.g, p.Aeq, p.beq, p.Aineq, p.bineq, q.x, q.lam_eq,
                          q.lam_ineq, 1e-8)
    assert ok, res
    assert not sol.feasible


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([ALL, TROT]), st.floats(0.2, 1.0))
def test_accepted_solutions_are_consistent(seed, feet, mu):
    rng = np.random.default_rng(seed)
    s = random_state(rng)
    qdd = rng.normal(scale=1.0, size=18)
    tm = np.concatenate([np.zeros(6), rng.normal(scale=5, size=12)])
    dyn, sn, sol = solve(s, feet, qdd, mu, tm)
    assert np.all(sol.tau_constraint[:6] == 0.0)
    f = sol.lambda_c.reshape(-1, 3)
    c = mu / np.sqrt(2)
    assert np.all(f[:, 2] >= -1e-10)
    assert np.all(c * f[:, 2] - np.abs(f[:, :2]).max(axis=1) >= -1e-10)
    if sol.feasible:
        # torques from the constraint subspace do not act on the constraint-free
        # dynamics; the fallback gives this up together with the base wrench
        assert np.max(np.abs(dyn.P @ dyn.S @ sol.tau_constraint)) < 1e-8
        I_P = np.eye(18) - dyn.P
        lhs = I_P @ (sn.M @ qdd + sn.h)
        rhs = I_P @ dyn.S @ (tm + sol.tau_constraint) + dyn.Jc.T @ sol.lambda_c
        assert np.max(np.abs(lhs - rhs)) < 1e-8


def test_torque_limits_respected():
    lim = np.full(MODEL.n, 30.0)
    sn, Jc = stance(MODEL.nominal_state(), ALL)
    dyn = projected_dynamics(sn.M, sn.h, Jc)
    sol = constraint_space_torques(dyn, sn.M, sn.h, np.zeros(18), np.zeros(18), 0.6, lim)
    assert sol.feasible
    assert np.max(np.abs(sol.tau_constraint[6:])) <= 30.0 + 1e-9


def test_invalid_inputs():
    sn, Jc = stance(MODEL.nominal_state(), ALL)
    dyn = projected_dynamics(sn.M, sn.h, Jc)
    with pytest.raises(ValueError):
        constraint_space_torques(dyn, sn.M, sn.h, np.zeros(18), np.zeros(18), 0.0, LIMITS)
    empty = projected_dynamics(sn.M, sn.h, np.zeros((0, 18)))
    with pytest.raises(ValueError):
        constraint_space_torques(empty, sn.M, sn.h, np.zeros(18), np.zeros(18), 0.6, LIMITS)


def test_failed_fallback_raises(monkeypatch):
    def never_optimal(prob, **kw):
        return QpSolution(np.zeros(prob.n), np.zeros(prob.meq), np.zeros(prob.m), (),
                          "max_iter", 0, np.inf, {})
    monkeypatch.setattr(proj, "solve_active_set", never_optimal)
    with pytest.raises(ContactQpError):
        solve(MODEL.nominal_state(), ALL, np.zeros(18), 0.6)
