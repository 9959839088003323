"""Closed-loop scenario execution, summaries and timing benchmarks."""
from __future__ import annotations

import json
import os
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..model import (GeneralizedState, ModelError, RobotModel, euler_zyx, load_model_file,
                     reference_quadruped)
from ..model import snapshot
from ..sim import (ContactParams, FlatTerrain, Heightfield, SimulationFault, World,
                   apply_disturbance, bumpy_terrain, step)
from .config import ConfigError, Scenario
from .controller import CONTROL_PERIOD, STAGES, LocomotionController, SolverFault
from .log import LogWriter, format_row, tick_columns, write_gains

RECOVERY_TOL = 0.1
BUDGET_STAGES = ("plan", "references", "projection", "linearize", "care", "qp")


@dataclass
class RunSummary:
    name: str
    ticks: int
    fell: bool
    fault: str | None
    mean_com_velocity: list
    peak_com_velocity: list
    tracking_rms: float
    timing: dict
    recoveries: list = field(default_factory=list)
    max_tilt: float = 0.0
    max_drift: float = 0.0
    dropped_rows: int = 0

    def deterministic(self) -> dict:
        """Everything except wall-clock timing."""
        d = asdict(self)
        d.pop("timing")
        return d

    @property
    def status(self) -> str:
        if self.fault is not None:
            return "fault"
        return "fell" if self.fell else "ok"


def build_model(scenario: Scenario, override=None) -> RobotModel:
    path = override or scenario.model
    if path is None:
        return reference_quadruped()
    p = Path(path)
    if not p.is_absolute() and not p.exists():
        p = Path(scenario.base_dir) / p
    try:
        return load_model_file(p)
    except OSError as exc:
        raise ConfigError(f"model file {p}: {exc.strerror}") from exc
    except ModelError as exc:
        raise ConfigError(f"model file {p}: {exc}") from exc


def build_terrain(scenario: Scenario):
    spec = scenario.terrain
    kind = spec.get("type", "flat")
    if kind == "flat":
        return FlatTerrain(float(spec.get("height", 0.0)))
    if kind == "bumpy":
        return bumpy_terrain(int(spec.get("seed", scenario.seed)),
                             cell=float(spec.get("cell", 0.05)),
                             amplitude=float(spec.get("amplitude", 0.03)),
                             bump_cells=int(spec.get("bump_cells", 4)))
    if kind == "file":
        p = Path(spec["path"])
        if not p.is_absolute():
            p = Path(scenario.base_dir) / p
        try:
            return Heightfield.load(p)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"heightfield {p}: {exc}") from exc
    raise ConfigError(f"unknown terrain type {kind!r}")


def build_world(scenario: Scenario) -> World:
    sc = scenario.sim
    try:
        return World(terrain=build_terrain(scenario),
                     contact=ContactParams(sc.kp, sc.kd, sc.mu, sc.kt), dt=sc.dt,
                     control_period=CONTROL_PERIOD)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def initial_state(model: RobotModel, terrain) -> GeneralizedState:
    """Nominal pose lowered until the highest ground point under a foot is touched."""
    s = model.nominal_state()
    fp = snapshot(model, s).foot_pos
    clear = min(float(p[2]) - terrain.height(p[0], p[1]) for p in fp)
    s.base_position = s.base_position - np.array([0.0, 0.0, clear])
    return s


def _noisy(state: GeneralizedState, noise, rng) -> GeneralizedState:
    if not noise.enabled:
        return state
    from ..model import quat_from_euler
    s = state.copy()
    s.base_position = s.base_position + rng.normal(0.0, noise.position, 3)
    rpy = euler_zyx(s.base_orientation) + rng.normal(0.0, noise.orientation, 3)
    s.base_orientation = quat_from_euler(rpy)
    s.q_j = s.q_j + rng.normal(0.0, noise.joint, s.q_j.shape)
    v = s.v.copy()
    v[:6] += rng.normal(0.0, noise.velocity, 6)
    v[6:] += rng.normal(0.0, noise.velocity, v.size - 6)
    s.v = v
    return s


def _percentiles(xs) -> dict:
    if len(xs) == 0:
        return {"p50": float("nan"), "p95": float("nan"), "p99": float("nan"), "n": 0}
    a = np.asarray(xs) * 1e3
    return {"p50": float(np.percentile(a, 50)), "p95": float(np.percentile(a, 95)),
            "p99": float(np.percentile(a, 99)), "n": int(a.size)}


def timing_report(samples: dict) -> dict:
    """Percentiles in milliseconds per stage, plus the budgeted stage sum."""
    out = {k: _percentiles(v) for k, v in samples.items()}
    n = min((len(samples.get(k, [])) for k in BUDGET_STAGES), default=0)
    if n:
        budget = np.sum([np.asarray(samples[k][:n]) for k in BUDGET_STAGES], axis=0)
        out["budget"] = _percentiles(budget)
    return out


def machine_info() -> dict:
    return {"machine": platform.machine(), "processor": platform.processor(),
            "python": platform.python_version(), "system": platform.system(),
            "cpus": os.cpu_count(), "numpy": np.__version__}


class _Run:
    """State of one closed-loop run."""

    def __init__(self, scenario: Scenario, model: RobotModel, pipelined: bool):
        self.sc = scenario
        self.model = model
        self.world = build_world(scenario)
        self.state = initial_state(model, self.world.terrain)
        self.ctrl = LocomotionController(model, scenario.planner, scenario.controller,
                                         gait=scenario.gait, pipelined=pipelined)
        self.rng = np.random.default_rng(scenario.seed)
        self.forces = np.zeros((len(model.foot_names), 3))
        self.contact = np.zeros(len(model.foot_names), dtype=bool)

    def tick(self, k: int):
        sc, model = self.sc, self.model
        t = k * CONTROL_PERIOD
        if sc.gait == "trot" and not self.ctrl.walking and t >= sc.settle - 1e-12:
            fp = snapshot(model, self.state).foot_pos
            self.ctrl.start_walking(dict(zip(model.foot_names, fp)))
        cmd = sc.command_at(t).clamped(sc.planner.v_max, sc.planner.omega_max)
        est = _noisy(self.state, sc.noise, self.rng)
        out = self.ctrl.step(est, cmd)
        s = self.state
        for i in range(self.world.substeps):
            ts = t + i * self.world.dt
            w = apply_disturbance(sc.disturbances, ts) if sc.disturbances else None
            try:
                res = step(self.world, model, s, out.tau, wrench=w)
            except SimulationFault as exc:
                exc.time = ts
                raise
            s = res.state
        self.state = s
        self.forces = res.forces
        self.contact = res.in_contact
        return t, cmd, out


def _terrain_below(terrain, p):
    return float(terrain.height(p[0], p[1]))


def run_scenario(scenario: Scenario, out_dir=None, model: RobotModel | None = None,
                 pipelined: bool = True, ticks_per_log: int = 1) -> RunSummary:
    """Execute a scenario; writes ``log.csv``, ``gains.txt`` and ``summary.json``
    into ``out_dir`` when given.

    Simulation and solver faults end the run early; the partial log is kept
    and the summary records the fault.  A fall (base too low or too tilted)
    also ends the run.
    """
    if ticks_per_log < 1:
        raise ConfigError("ticks-per-log must be at least 1")
    model = model or build_model(scenario)
    run = _Run(scenario, model, pipelined)
    n_ticks = int(round(scenario.duration / CONTROL_PERIOD))
    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        writer = LogWriter(out_dir / "log.csv", tick_columns(model.n),
                           {"scenario": scenario.name, "seed": scenario.seed,
                            "control_period": CONTROL_PERIOD, "ticks_per_log": ticks_per_log})
    timings = {k: [] for k in STAGES}
    gain_ticks, gains = [], []
    rows = []
    fell = False
    fault = None
    k_done = 0
    feet = model.foot_names
    try:
        for k in range(n_ticks):
            try:
                t, cmd, out = run.tick(k)
            except SimulationFault as exc:
                fault = f"simulation: {exc} at t={exc.time:.4f}"
                break
            except SolverFault as exc:
                fault = f"solver: {exc}"
                break
            k_done = k + 1
            if run.ctrl.walking:
                for name in STAGES:
                    timings[name].append(out.timing.get(name, 0.0))
            s = run.state
            rpy = euler_zyx(s.base_orientation)
            snap_com = out.com
            row = np.concatenate([
                [t, scenario.planner.T_s, cmd.vx, cmd.vy, cmd.omega_z],
                s.base_position, rpy, s.v[:6], out.X_des, snap_com, out.com_vel,
                out.zmp, [f in out.stance for f in feet], run.contact.astype(float),
                run.forces[:, 2], out.tau[6:],
                [out.care_residual, out.closed_loop_max_real, float(out.qp_feasible),
                 float(out.qp_iterations), float(out.gain_held)]])
            rows.append(row)
            if writer is not None and k % ticks_per_log == 0:
                writer.put(format_row([k, *row]))
            if out.K is not None and k % scenario.gain_every == 0:
                gain_ticks.append(k)
                gains.append(out.K.copy())
            ground = _terrain_below(run.world.terrain, s.base_position)
            tilt = max(abs(rpy[0]), abs(rpy[1]))
            if s.base_position[2] - ground < scenario.min_height or tilt > scenario.max_tilt:
                fell = True
                break
    finally:
        run.ctrl.close()
        if writer is not None:
            writer.close()
    data = np.array(rows) if rows else np.zeros((0, len(tick_columns(model.n)) - 1))
    summary = summarize(scenario, data, timings, fell, fault, k_done)
    if writer is not None:
        summary.dropped_rows = writer.dropped
        write_gains(out_dir / "gains.txt", gain_ticks, gains)
        (out_dir / "summary.json").write_text(json.dumps(asdict(summary), indent=2) + "\n")
    return summary


def _col(name):
    cols = tick_columns()[1:]
    return cols.index(name)


def summarize(scenario: Scenario, data: np.ndarray, timings: dict, fell: bool, fault,
              ticks: int) -> RunSummary:
    t = data[:, _col("t")] if len(data) else np.zeros(0)
    cv = data[:, [_col("com_vx"), _col("com_vy"), _col("com_vz")]] if len(data) else np.zeros((0, 3))
    t_eval = scenario.settle + scenario.transient
    win = t >= t_eval
    if np.any(win):
        mean_v = cv[win].mean(axis=0)
        yaw = data[win, _col("base_yaw")]
        vx_c, vy_c = data[win, _col("vx_cmd")], data[win, _col("vy_cmd")]
        cmd_w = np.stack([np.cos(yaw) * vx_c - np.sin(yaw) * vy_c,
                          np.sin(yaw) * vx_c + np.cos(yaw) * vy_c], axis=1)
        rms = float(np.sqrt(np.mean(np.sum((cv[win, :2] - cmd_w) ** 2, axis=1))))
    else:
        mean_v = np.full(3, np.nan)
        rms = float("nan")
    peak = np.max(np.abs(cv), axis=0) if len(cv) else np.zeros(3)
    tilt = 0.0
    drift = 0.0
    if len(data):
        tilt = float(np.max(np.abs(data[:, [_col("base_roll"), _col("base_pitch")]])))
        com_xy = data[:, [_col("com_x"), _col("com_y")]]
        drift = float(np.max(np.linalg.norm(com_xy - com_xy[0], axis=1)))
    return RunSummary(scenario.name, ticks, bool(fell), fault, [float(x) for x in mean_v],
                      [float(x) for x in peak], rms, timing_report(timings),
                      recoveries(scenario, data), tilt, drift)


def recoveries(scenario: Scenario, data: np.ndarray) -> list:
    """For each disturbance: peak velocity along the push and time to settle.

    Settling is measured from the end of the push until the last instant the
    velocity along the push direction differs from the commanded one by more
    than ``RECOVERY_TOL``, looking up to the next push or the end of the log.
    """
    out = []
    if not len(data):
        return out
    t = data[:, _col("t")]
    dists = sorted(scenario.disturbances, key=lambda d: d.start)
    for i, d in enumerate(dists):
        f = np.asarray(d.wrench[:3])
        nf = np.linalg.norm(f[:2])
        u = f[:2] / nf if nf > 0 else np.array([0.0, 1.0])
        end = d.start + d.duration
        horizon = dists[i + 1].start if i + 1 < len(dists) else t[-1] + CONTROL_PERIOD
        win = (t >= d.start) & (t < horizon)
        if not np.any(win):
            out.append({"start": d.start, "peak_velocity": None, "recovery_time": None,
                        "peak_tilt": None})
            continue
        yaw = data[win, _col("base_yaw")]
        vx_c, vy_c = data[win, _col("vx_cmd")], data[win, _col("vy_cmd")]
        cmd = np.stack([np.cos(yaw) * vx_c - np.sin(yaw) * vy_c,
                        np.sin(yaw) * vx_c + np.cos(yaw) * vy_c], axis=1) @ u
        v = data[win][:, [_col("com_vx"), _col("com_vy")]] @ u
        tw = t[win]
        err = np.abs(v - cmd)
        peak = float(np.max(np.abs(v)))
        tilt = float(np.max(np.abs(data[win][:, [_col("base_roll"), _col("base_pitch")]])))
        after = tw >= end
        bad = np.nonzero(after & (err > RECOVERY_TOL))[0]
        if bad.size == 0:
            rec = 0.0
        elif bad[-1] == len(tw) - 1:
            rec = None  # still outside the band when the window closes
        else:
            rec = float(tw[bad[-1] + 1] - end)
        out.append({"start": d.start, "peak_velocity": peak, "recovery_time": rec,
                    "peak_tilt": tilt})
    return out


# ------------------------------------------------------------ swing-duration sweep

@dataclass
class SweepResult:
    """Outcome of each (controller, T_s) run and the longest stable swing."""

    runs: dict
    max_stable: dict

    def to_dict(self) -> dict:
        return {"runs": {c: {f"{ts:g}": st for ts, st in r.items()} for c, r in self.runs.items()},
                "max_stable": self.max_stable}


def sweep_swing(scenario: Scenario, out_dir=None, model: RobotModel | None = None,
                stop_at_first_failure: bool = True) -> SweepResult:
    """Run the scenario for every swing duration in its sweep, per controller.

    A run is stable when it ends without a fall or fault.  The longest stable
    swing is the last value of the stable prefix of the ascending sweep, so a
    lucky survival beyond the first failure does not count.  ``None`` means
    even the shortest swing failed.
    """
    if not scenario.sweep_T_s:
        raise ConfigError("scenario has no sweep section")
    from dataclasses import replace
    model = model or build_model(scenario)
    runs, best = {}, {}
    for ctl in scenario.sweep_controllers:
        runs[ctl] = {}
        best[ctl] = None
        failed = False
        for ts in scenario.sweep_T_s:
            if failed and stop_at_first_failure:
                break
            sc = scenario.with_overrides(planner=replace(scenario.planner, T_s=ts),
                                         controller=replace(scenario.controller, type=ctl))
            sub = None if out_dir is None else Path(out_dir) / f"{ctl}_Ts{ts:g}"
            status = run_scenario(sc, sub, model=model, pipelined=False).status
            runs[ctl][ts] = status
            if status == "ok" and not failed:
                best[ctl] = ts
            else:
                failed = True
    res = SweepResult(runs, best)
    if out_dir is not None:
        (Path(out_dir) / "sweep.json").write_text(json.dumps(res.to_dict(), indent=2))
    return res


# ------------------------------------------------------------ benchmarks

@dataclass
class BenchmarkReport:
    stages: dict
    machine: dict
    repetitions: int
    warmup: int
    mode: str


def benchmark(scenario: Scenario, repetitions: int, warmup: int = 10, pipelined: bool = False,
              model: RobotModel | None = None) -> BenchmarkReport:
    """Closed-loop per-tick latency of the control pipeline.

    The robot settles and starts trotting first; then ``warmup`` ticks are
    discarded and ``repetitions`` ticks are timed.
    """
    if repetitions < 1:
        raise ValueError("benchmark needs at least one timed repetition (empty report)")
    if warmup < 10:
        raise ValueError("at least 10 warm-up repetitions are required")
    model = model or build_model(scenario)
    run = _Run(scenario, model, pipelined)
    k = 0
    while scenario.gait == "trot" and not run.ctrl.walking:
        run.tick(k)
        k += 1
    samples = {name: [] for name in STAGES}
    try:
        for i in range(warmup + repetitions):
            _, _, out = run.tick(k)
            k += 1
            if i >= warmup:
                for name in STAGES:
                    samples[name].append(out.timing.get(name, 0.0))
    finally:
        run.ctrl.close()
    return BenchmarkReport(timing_report(samples), machine_info(), repetitions, warmup,
                           "pipelined" if pipelined else "synchronous")


def benchmark_planner(repetitions: int, N: int = 3, warmup: int = 10, seed: int = 0):
    """Footstep planner alone: both axes from a random touchdown state."""
    import time

    from ..lipm_mpc import AxisState, FootstepPlanner, LipmParams
    if repetitions < 1:
        raise ValueError("benchmark needs at least one timed repetition (empty report)")
    rng = np.random.default_rng(seed)
    params = LipmParams()
    planner = FootstepPlanner([0.3] * N, [1000.0] * N, [1.0] * N, params)
    xs = []
    for i in range(warmup + repetitions):
        x = AxisState(*rng.normal(0, 0.1, 2))
        y = AxisState(*rng.normal(0, 0.1, 2))
        t0 = time.perf_counter()
        planner.plan(x, 0.0, 0.5)
        planner.plan(y, 0.0, 0.0)
        dt = time.perf_counter() - t0
        if i >= warmup:
            xs.append(dt)
    return BenchmarkReport({"plan": _percentiles(xs)}, machine_info(), repetitions, warmup,
                           "planner")
