"""End-to-end acceptance checks, one test per criterion.

Each test is marked with its criterion number; the terminal summary prints a
PASS/FAIL line per criterion with the measured values.  The cycle-time budget
is only gated when ``LQRTROT_REFERENCE_MACHINE=1`` marks the host as the
reference machine class; elsewhere it is measured and reported.
"""
import itertools
import os
import time

import numpy as np
import pytest

from lqrtrot.lipm_mpc import AxisState, MpcConfig, lipm_transition, plan_footsteps
from lqrtrot.lqr import (base_forward_dynamics, care_residual, gravity_compensation,
                         linearize_base, solve_care)
from lqrtrot.model import reference_quadruped
from lqrtrot.projection import projection_matrix
from lqrtrot.qp import OPTIMAL, solve_active_set
from lqrtrot.runner.config import shipped_scenario
from lqrtrot.runner.log import read_gains, read_log
from lqrtrot.runner.run import benchmark, run_scenario, sweep_swing

import oracles as O
import test_lipm_mpc as TM
import test_lqr as TL
import test_projection as TP
import test_qp as TQ

MODEL = reference_quadruped()
FEET = ("LF", "RF", "LH", "RH")


def crit(n, label):
    return pytest.mark.criterion(n, label)


@pytest.fixture(scope="module")
def trot_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("trot")
    sc = shipped_scenario("trot").with_overrides(gain_every=1)
    t0 = time.perf_counter()
    summ = run_scenario(sc, out)
    return sc, out, summ, time.perf_counter() - t0


# ------------------------------------------------------------ 1

@crit(1, "LIPM closed form vs RK4")
def test_lipm_closed_form(record):
    rng = np.random.default_rng(0)
    w = TM.PARAMS.omega
    worst = 0.0
    for t in np.arange(1, 11) * 0.05:
        A, B = lipm_transition(t, w)
        for _ in range(3):
            x0, p = rng.normal(0, 0.1, 2), rng.normal(0, 0.05)
            worst = max(worst, np.max(np.abs(A @ x0 + B * p - O.lipm_rk4(x0, p, w, t))))
    record["max_diff"] = f"{worst:.2e}"
    assert worst < 1e-8


# ------------------------------------------------------------ 2

@crit(2, "MPC condensed plan vs KKT oracle")
def test_mpc_optimality(record):
    rng = np.random.default_rng(10)
    configs = [(AxisState(0.04, 0.35), MpcConfig(N=3, T_s=0.3, Q=1000.0, R=1.0, p0=0.01,
                                                 v_des=0.5))]
    for _ in range(200):
        N = int(rng.integers(1, 6))
        cfg = MpcConfig(N=N, T_s=tuple(rng.uniform(0.15, 0.6, N)),
                        Q=tuple(rng.uniform(0, 2000, N)), R=tuple(rng.uniform(0.1, 10, N)),
                        p0=rng.normal(0, 0.2), v_des=rng.uniform(-1, 1))
        configs.append((AxisState(*rng.normal(0, 0.2, 2)), cfg))
    worst = 0.0
    for x, cfg in configs:
        plan = plan_footsteps(x, cfg, TM.PARAMS)
        p_ref, _ = TM.dense_kkt_plan(x, cfg.p0, cfg.v_des, cfg.T_s, cfg.Q, cfg.R, TM.W)
        worst = max(worst, np.max(np.abs(plan.p_star - p_ref)))
    eq = plan_footsteps(AxisState(0.137, 0.0), MpcConfig(N=3, p0=0.137), TM.PARAMS)
    record["configs"] = len(configs)
    record["max_diff"] = f"{worst:.2e}"
    assert worst < 1e-9
    assert np.all(eq.p_star == 0.137)


# ------------------------------------------------------------ 3

@crit(3, "projection algebra")
def test_projection_algebra(record):
    rng = np.random.default_rng(20)
    subsets = [c for r in range(1, 5) for c in itertools.combinations(FEET, r)]
    idem = orth = trace = 0.0
    for _ in range(500):
        feet = subsets[rng.integers(len(subsets))]
        _, Jc = TP.stance(TP.random_state(rng), feet)
        P = projection_matrix(Jc)
        idem = max(idem, np.max(np.abs(P @ P - P)))
        orth = max(orth, np.max(np.abs(P @ Jc.T)))
        trace = max(trace, abs(np.trace(P) - (6 + MODEL.n - np.linalg.matrix_rank(Jc))))
    record.update(idempotence=f"{idem:.1e}", orthogonality=f"{orth:.1e}",
                  trace_err=f"{trace:.1e}")
    assert idem < 1e-9 and orth < 1e-9 and trace < 1e-9


# ------------------------------------------------------------ 4

@crit(4, "linearization vs Richardson FD")
def test_linearization(record):
    rng = np.random.default_rng(30)
    worst_a = worst_b = 0.0
    for feet in (TL.TROT, ("RF", "LH"), TL.ALL):
        s = TL.random_state(rng, vel=0.3)
        s0 = s.copy()
        s0.v = s0.v * 0
        P_prev = TL.dynamics(TL.displaced(s0, rng.normal(scale=0.3, size=18), -0.0025),
                             feet)[1].P
        _, dyn = TL.dynamics(s, feet, P_prev)
        tau0 = gravity_compensation(MODEL, s, dyn)
        lin = linearize_base(MODEL, s, tau0, dyn, TL.feet_idx(feet))
        D1 = TL.central(s, tau0, dyn, feet, 1e-3)
        D2 = TL.central(s, tau0, dyn, feet, 5e-4)
        ref = (4 * D2 - D1) / 3
        worst_a = max(worst_a, np.max(np.abs(lin.A[6:] - ref)) / np.max(np.abs(ref)))
        a0 = base_forward_dynamics(MODEL, s, tau0, dyn)
        cols = np.column_stack([base_forward_dynamics(MODEL, s, tau0 + np.eye(18)[j], dyn) - a0
                                for j in range(18)])
        worst_b = max(worst_b, np.max(np.abs(cols - lin.B2)))
    record.update(A_rel=f"{worst_a:.1e}", B_abs=f"{worst_b:.1e}")
    assert worst_a < 1e-4 and worst_b < 1e-9


# ------------------------------------------------------------ 5

@crit(5, "CARE closed forms and every trot cycle")
def test_care(trot_run, record):
    scal = solve_care([[0.0]], [[1.0]], [[1.0]], [[1.0]])
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    P_ref = np.array([[np.sqrt(3), 1.0], [1.0, np.sqrt(3)]])
    assert care_residual(A, B, np.eye(2), np.eye(1), P_ref) < 1e-12
    di = solve_care(A, B, np.eye(2), np.eye(1), tol=1e-12)
    closed = max(abs(scal.K[0, 0] - 1.0), np.max(np.abs(di.K - [[1.0, np.sqrt(3)]])))
    _, out, _, _ = trot_run
    _, cols, data = read_log(out / "log.csv")
    res = data[:, cols.index("care_residual")]
    walking = ~np.isnan(res)
    ticks, gains = read_gains(out / "gains.txt")
    base_rows = max(np.max(np.abs(K[:6])) for K in gains)
    max_res = np.max(res[walking])
    max_eig = np.max(data[walking, cols.index("cl_max_real")])
    held = int(np.sum(data[:, cols.index("gain_held")]))
    record.update(closed_form=f"{closed:.1e}", cycles=int(walking.sum()),
                  max_residual=f"{max_res:.1e}", max_re_eig=f"{max_eig:.2f}",
                  base_rows=f"{base_rows:.1e}", held=held)
    assert closed < 1e-12
    assert walking.sum() == len(gains) and walking.sum() > 3800
    assert max_res < 1e-8 and max_eig < 0 and held == 0
    assert base_rows < 1e-9


# ------------------------------------------------------------ 6

@crit(6, "trot at 0.5 m/s")
def test_trot_speed(trot_run, record):
    sc, _, summ, wall = trot_run
    vx = summ.mean_com_velocity[0]
    # touchdown velocities are what the planner regulates; averaged over a step
    # the pendulum is slower by tanh(wT/2) / (wT/2)
    half = TM.W * sc.planner.T_s / 2
    record.update(mean_vx=f"{vx:.3f}", lipm_mean=f"{0.5 * np.tanh(half) / half:.3f}",
                  fell=summ.fell, wall_s=f"{wall:.1f}")
    assert summ.status == "ok"
    assert abs(vx - 0.5) <= 0.1
    assert wall < 60.0


@crit(6, "stretch: trot at 1.0 m/s (not gated)")
def test_trot_stretch(record):
    summ = run_scenario(shipped_scenario("max_speed"))
    vx = summ.mean_com_velocity[0] if summ.ticks else float("nan")
    ok = summ.status == "ok" and abs(vx - 1.0) <= 0.1
    record.update(status=summ.status, mean_vx=f"{vx:.3f}", verdict="PASS" if ok else "MISS")


# ------------------------------------------------------------ 7

@crit(7, "push recovery")
def test_push_recovery(record):
    summ = run_scenario(shipped_scenario("push"))
    rec = summ.recoveries
    record.update(status=summ.status,
                  peaks="/".join(f"{r['peak_velocity']:.2f}" for r in rec),
                  recovery_s="/".join(str(None if r["recovery_time"] is None
                                          else round(r["recovery_time"], 3)) for r in rec),
                  tilt=f"{max(r['peak_tilt'] for r in rec):.3f}")
    assert summ.status == "ok" and len(rec) == 4
    for r in rec:
        assert 0.8 <= r["peak_velocity"] <= 1.2
        assert r["recovery_time"] is not None and r["recovery_time"] <= 0.6
        assert r["peak_tilt"] < 0.3


# ------------------------------------------------------------ 8

@crit(8, "long-swing ordering LQR > PD")
def test_long_swing_ordering(tmp_path, record):
    res = sweep_swing(shipped_scenario("long_swing"), tmp_path)
    lqr, pd = res.max_stable["lqr"], res.max_stable["pd"]
    record.update(lqr=lqr, pd=pd)
    assert lqr is not None
    assert pd is None or lqr > pd


# ------------------------------------------------------------ 9

@crit(9, "cycle budget p95 < 2.5 ms")
def test_cycle_budget(record):
    rep = benchmark(shipped_scenario("trot"), 2000, warmup=50)
    p95 = rep.stages["budget"]["p95"]
    gated = os.environ.get("LQRTROT_REFERENCE_MACHINE") == "1"
    record.update(p95_ms=f"{p95:.3f}", p50_ms=f"{rep.stages['budget']['p50']:.3f}",
                  cpus=rep.machine["cpus"], processor=rep.machine["processor"] or "?")
    if not gated:
        record["verdict"] = "REPORTED" if p95 >= 2.5 else "PASS"
        return
    assert p95 < 2.5


# ------------------------------------------------------------ 10

@crit(10, "bitwise determinism")
def test_determinism(trot_run, tmp_path, record):
    _, out, _, _ = trot_run
    again = run_scenario(shipped_scenario("trot").with_overrides(gain_every=1), tmp_path / "t")
    same_trot = ((tmp_path / "t/log.csv").read_bytes() == (out / "log.csv").read_bytes()
                 and (tmp_path / "t/gains.txt").read_bytes() == (out / "gains.txt").read_bytes())
    noisy = shipped_scenario("long_swing").with_overrides(duration=2.0)
    logs = []
    for d in ("a", "b"):
        run_scenario(noisy, tmp_path / d)
        logs.append((tmp_path / d / "log.csv").read_bytes())
    record.update(trot=same_trot, noisy=logs[0] == logs[1])
    assert again.status == "ok"
    assert same_trot and logs[0] == logs[1]


# ------------------------------------------------------------ 11

@crit(11, "QP kernel vs enumeration oracle")
def test_qp_kernel(record):
    rng = np.random.default_rng(40)
    worst, kkt_ok = 0.0, True
    for _ in range(300):
        n = int(rng.integers(1, 31))
        m = int(rng.integers(1, 11))
        prob = TQ.random_qp(rng, n, m)
        sol = solve_active_set(prob)
        assert sol.status == OPTIMAL
        ok, _ = O.kkt_check(prob.H, prob.g, None, None, prob.Aineq, prob.bineq, sol.x,
                            sol.lam_eq, sol.lam_ineq, 1e-8)
        kkt_ok &= ok
        f_ref, _ = O.enumerate_qp(prob.H, prob.g, prob.Aineq, prob.bineq)
        worst = max(worst, abs(sol.objective - f_ref) / (1 + abs(f_ref)))
    record.update(max_obj_diff=f"{worst:.1e}", kkt=kkt_ok)
    assert worst < 1e-8 and kkt_ok
