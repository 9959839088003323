import json
import textwrap

import numpy as np
import pytest

from lqrtrot.gait import UserCommand
from lqrtrot.runner import cli
from lqrtrot.runner import run as run_mod
from lqrtrot.runner.config import (ConfigError, load_scenario, scenario_from_dict,
                                   shipped_scenario, shipped_scenarios)
from lqrtrot.runner.log import LogSchemaError, read_gains, read_log, tick_columns
from lqrtrot.runner.plots import emit_plots, gain_heatmap
from lqrtrot.runner.run import (RunSummary, benchmark, benchmark_planner, run_scenario,
                                sweep_swing)


def write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


BASE = {"version": 1, "duration": 1.0}


def doc(**kw):
    d = dict(BASE)
    d.update(kw)
    return d


# ------------------------------------------------------------ configuration

def test_shipped_scenarios_present():
    names = set(shipped_scenarios())
    assert {"trot", "push", "long_swing", "bumpy", "stand", "max_speed"} <= names
    for n in names:
        sc = shipped_scenario(n)
        assert sc.duration > 0


def test_long_swing_sweep_grid():
    sc = shipped_scenario("long_swing")
    np.testing.assert_allclose(sc.sweep_T_s, np.arange(0.3, 0.7001, 0.05))
    assert sc.sweep_controllers == ("lqr", "pd")


@pytest.mark.parametrize("bad", [
    doc(duration=-1.0),
    doc(commands=[{"t": 0.5}, {"t": 0.5}]),
    doc(commands=[{"t": 1.0}, {"t": 0.2}]),
    doc(disturbances=[{"start": 0.0, "duration": 0.0, "force": [1, 0, 0]}]),
    doc(gait="gallop"),
    doc(unknown_key=1),
    doc(sweep={"T_s": [0.4, 0.3]}),
    doc(sweep={"T_s": [0.3], "controllers": ["mpc"]}),
    {"duration": 1.0},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        scenario_from_dict(bad)


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.yaml")
    with pytest.raises(ConfigError):
        load_scenario(write(tmp_path, "a: [1, 2\n"))
    with pytest.raises(ConfigError):
        load_scenario(write(tmp_path, "- 1\n- 2\n"))


def test_command_schedule():
    sc = scenario_from_dict(doc(commands=[{"t": 0.0}, {"t": 1.0, "vx": 0.5, "ramp": 1.0},
                                          {"t": 3.0, "vy": 0.2}]))
    assert sc.command_at(0.5) == UserCommand()
    assert sc.command_at(1.5).vx == pytest.approx(0.25)
    assert sc.command_at(2.5) == UserCommand(0.5)
    assert sc.command_at(3.0) == UserCommand(0.0, 0.2)


# ------------------------------------------------------------ runs

def short(name, duration, **kw):
    return shipped_scenario(name).with_overrides(duration=duration, **kw)


@pytest.fixture(scope="module")
def trot_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("trot")
    sc = short("trot", 1.5, transient=0.5)
    return sc, out, run_scenario(sc, out, pipelined=False)


def test_log_has_one_row_per_tick(trot_run):
    sc, out, summ = trot_run
    meta, cols, data = read_log(out / "log.csv")
    assert cols == tick_columns()
    assert data.shape[0] == round(sc.duration / 0.0025) == summ.ticks
    np.testing.assert_array_equal(data[:, 0], np.arange(summ.ticks))
    assert meta["scenario"] == "trot"
    assert (out / "summary.json").exists() and (out / "gains.txt").exists()


def test_every_cycle_gain_is_healthy(trot_run):
    _, out, _ = trot_run
    _, cols, data = read_log(out / "log.csv")
    walking = ~np.isnan(data[:, cols.index("care_residual")])
    assert walking.sum() > 400
    assert np.all(data[walking, cols.index("care_residual")] < 1e-8)
    assert np.all(data[walking, cols.index("cl_max_real")] < 0)
    ticks, mats = read_gains(out / "gains.txt")
    assert mats and all(np.max(np.linalg.norm(K[:6], axis=1)) < 1e-9 for K in mats)


def test_ticks_per_log(tmp_path):
    sc = short("stand", 0.5)
    run_scenario(sc, tmp_path, ticks_per_log=4)
    _, _, data = read_log(tmp_path / "log.csv")
    assert data.shape[0] == 50
    with pytest.raises(ConfigError):
        run_scenario(sc, tmp_path, ticks_per_log=0)


def test_rerun_is_bitwise_identical(trot_run, tmp_path):
    sc, out, summ = trot_run
    again = run_scenario(sc, tmp_path, pipelined=False)
    assert (tmp_path / "log.csv").read_bytes() == (out / "log.csv").read_bytes()
    assert (tmp_path / "gains.txt").read_bytes() == (out / "gains.txt").read_bytes()
    assert (json.dumps(again.deterministic(), sort_keys=True)
            == json.dumps(summ.deterministic(), sort_keys=True))


def test_noise_is_seeded(tmp_path):
    sc = short("long_swing", 0.75)
    run_scenario(sc, tmp_path / "a")
    run_scenario(sc, tmp_path / "b")
    run_scenario(sc.with_overrides(seed=1), tmp_path / "c")
    a, b, c = ((tmp_path / d / "log.csv").read_bytes() for d in "abc")
    assert a == b and a != c


def test_pipelined_matches_synchronous(trot_run, tmp_path):
    sc, out, _ = trot_run
    run_scenario(sc, tmp_path, pipelined=True)
    assert (tmp_path / "log.csv").read_bytes() == (out / "log.csv").read_bytes()


def test_stand_holds_still(tmp_path):
    summ = run_scenario(shipped_scenario("stand"), tmp_path)
    assert summ.status == "ok" and not summ.fell
    assert summ.max_drift < 0.05
    written = emit_plots(tmp_path / "log.csv")
    v = np.loadtxt(written["velocity"])
    assert np.max(np.abs(v[:, 1:3])) < 0.05
    assert np.all(v[:, 6:8] == 0.0)
    assert "gain_heatmap" in written


def test_fault_keeps_partial_log(tmp_path):
    sc = scenario_from_dict(doc(disturbances=[{"start": 0.1, "duration": 0.2,
                                               "force": [0, 1e6, 0]}]))
    summ = run_scenario(sc, tmp_path)
    assert summ.status == "fault" and summ.fault.startswith("simulation")
    _, _, data = read_log(tmp_path / "log.csv")
    assert 0 < data.shape[0] < 400
    assert json.loads((tmp_path / "summary.json").read_text())["fault"] == summ.fault


def test_fall_is_flagged():
    # the nominal stand sits at 0.45 m, so the height threshold trips at once
    sc = scenario_from_dict(doc(gait="stand", fall={"min_height": 0.47}))
    summ = run_scenario(sc)
    assert summ.fell and summ.status == "fell" and summ.fault is None
    assert summ.ticks == 1
    assert not run_scenario(sc.with_overrides(min_height=0.2)).fell


def test_sweep_needs_section():
    with pytest.raises(ConfigError):
        sweep_swing(short("trot", 0.5))


def test_sweep_stops_at_first_failure(monkeypatch, tmp_path):
    outcome = {0.3: "ok", 0.35: "ok", 0.4: "fell", 0.45: "ok"}
    seen = []

    def fake(sc, out=None, **kw):
        seen.append((sc.controller.type, sc.planner.T_s))
        status = outcome[sc.planner.T_s] if sc.controller.type == "lqr" else "fault"
        return RunSummary(sc.name, 0, status == "fell", "x" if status == "fault" else None,
                          [], [], 0.0, {})

    monkeypatch.setattr(run_mod, "run_scenario", fake)
    sc = short("long_swing", 0.5, sweep_T_s=(0.3, 0.35, 0.4, 0.45))
    res = sweep_swing(sc, tmp_path)
    assert res.max_stable == {"lqr": 0.35, "pd": None}
    assert ("lqr", 0.45) not in seen and ("pd", 0.35) not in seen
    assert json.loads((tmp_path / "sweep.json").read_text())["max_stable"]["lqr"] == 0.35


# ------------------------------------------------------------ plots

def test_plot_files(trot_run, tmp_path):
    _, out, _ = trot_run
    written = emit_plots(out / "log.csv", tmp_path)
    assert set(written) == {"velocity", "euler", "gain_heatmap", "script"}
    H = np.loadtxt(written["gain_heatmap"])
    assert H.shape == (18, 12)
    assert np.max(H[:6]) < 1e-9 and np.max(H[6:]) > 0
    tick, K = gain_heatmap(out / "gains.txt")
    np.testing.assert_allclose(H, K, rtol=1e-12)
    script = written["script"].read_text()
    assert "velocity.dat" in script and "gain_heatmap.dat" in script


def test_push_series_crosses_minus_one(tmp_path):
    sc = short("push", 3.0)
    run_scenario(sc, tmp_path)
    v = np.loadtxt(emit_plots(tmp_path / "log.csv")["velocity"])
    kick = sc.disturbances[0]
    near = (v[:, 0] >= kick.start) & (v[:, 0] < kick.start + 0.6)
    assert np.min(v[near, 2]) < -1.0
    assert np.all(v[v[:, 0] < kick.start, 2] > -0.5)


def test_plot_schema_mismatch(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("# lqrtrot-log {\"version\": 1}\ntick,t\n0,0.0\n")
    with pytest.raises(LogSchemaError):
        emit_plots(p)
    p.write_text("# lqrtrot-log {\"version\": 99}\ntick,t\n0,0.0\n")
    with pytest.raises(LogSchemaError):
        emit_plots(p)


# ------------------------------------------------------------ benchmarks

def test_benchmark_errors():
    sc = short("trot", 1.0)
    with pytest.raises(ValueError):
        benchmark(sc, 0)
    with pytest.raises(ValueError):
        benchmark(sc, 5, warmup=9)
    with pytest.raises(ValueError):
        benchmark_planner(0)


def test_benchmark_report():
    rep = benchmark(short("trot", 1.0), 20, warmup=10)
    assert rep.repetitions == 20 and rep.mode == "synchronous"
    for name in ("plan", "linearize", "care", "qp", "total"):
        p = rep.stages[name]
        assert 0 <= p["p50"] <= p["p95"] <= p["p99"]
    assert rep.stages["total"]["p50"] >= rep.stages["care"]["p50"]
    assert "python" in rep.machine


def test_planner_microbench():
    rep = benchmark_planner(500, N=3)
    assert rep.stages["plan"]["p50"] < 2.5  # milliseconds


# ------------------------------------------------------------ CLI

def test_cli_validate(capsys):
    path = str(run_mod.Path(__file__).parents[1] / "src/lqrtrot/scenarios/trot.yaml")
    assert cli.main(["validate-config", "--scenario", path]) == 0
    assert "ok" in capsys.readouterr().out


def test_cli_config_error_exit(tmp_path, capsys):
    p = write(tmp_path, "version: 1\nduration: -2\n")
    assert cli.main(["validate-config", "--scenario", str(p)]) == 1
    assert cli.main(["run", "--scenario", str(tmp_path / "nope.yaml")]) == 1
    assert cli.main(["validate-config", "--scenario", str(p.with_name("x")), "--seed", "1"]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_bad_model(tmp_path):
    p = write(tmp_path, "version: 1\nduration: 1\n")
    m = tmp_path / "m.json"
    m.write_text("{\"schema_version\": 1, \"links\": []}")
    assert cli.main(["validate-config", "--scenario", str(p), "--model", str(m)]) == 1


def test_cli_run_and_plot(tmp_path, capsys):
    p = write(tmp_path, "version: 1\nduration: 0.1\ngait: stand\n")
    out = tmp_path / "out"
    assert cli.main(["run", "--scenario", str(p), "--out", str(out), "--seed", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "ok"
    assert cli.main(["plot", "--out", str(out)]) == 0
    assert (out / "velocity.dat").exists() and (out / "plots.gp").exists()
    assert cli.main(["plot", "--out", str(tmp_path / "empty")]) == 1


def test_cli_simulation_fault_exit(tmp_path):
    p = write(tmp_path, """\
        version: 1
        duration: 0.5
        disturbances:
          - {start: 0.1, duration: 0.2, force: [0, 1000000.0, 0]}
        """)
    assert cli.main(["run", "--scenario", str(p)]) == 2


def test_cli_solver_fault_exit(tmp_path, monkeypatch):
    def fake(sc, out=None, **kw):
        return RunSummary(sc.name, 1, False, "solver: CARE failed", [], [], 0.0, {})
    monkeypatch.setattr(run_mod, "run_scenario", fake)
    p = write(tmp_path, "version: 1\nduration: 0.1\n")
    assert cli.main(["run", "--scenario", str(p)]) == 3


def test_cli_bench(tmp_path, capsys):
    p = write(tmp_path, "version: 1\nduration: 1\n")
    assert cli.main(["bench", "--scenario", str(p), "--planner-only", "--repetitions", "50",
                     "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "bench.json").read_text())["mode"] == "planner"
    assert cli.main(["bench", "--scenario", str(p), "--repetitions", "0"]) == 1
