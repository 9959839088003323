"""Command-line driver: ``lqrtrot run|bench|plot|validate-config``.

Exit codes: 0 ok, 1 configuration error, 2 simulation fault, 3 solver fault.
A fall is a result, not an error, and exits with 0.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .config import ConfigError, load_scenario
from .log import LogSchemaError

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_SOLVER = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lqrtrot", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, out=True):
        sp.add_argument("--scenario", required=True, help="scenario YAML file")
        sp.add_argument("--model", help="robot model JSON (overrides the scenario)")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        if out:
            sp.add_argument("--out", help="output directory")

    r = sub.add_parser("run", help="run a scenario (or its swing-duration sweep)")
    common(r)
    r.add_argument("--sync-lqr", action="store_true",
                   help="synthesize gains on the control thread instead of a worker")
    r.add_argument("--ticks-per-log", type=int, default=1, help="log every n-th tick")

    b = sub.add_parser("bench", help="per-stage latency percentiles")
    common(b)
    b.add_argument("--sync-lqr", action="store_true", help="synchronous gain synthesis")
    b.add_argument("--repetitions", type=int, default=1000)
    b.add_argument("--warmup", type=int, default=10)
    b.add_argument("--planner-only", action="store_true", help="time the footstep planner alone")

    pl = sub.add_parser("plot", help="plot data and a gnuplot script from a run")
    pl.add_argument("--log", help="tick log (default: <out>/log.csv)")
    pl.add_argument("--out", required=True, help="run directory; plot files are written here")

    v = sub.add_parser("validate-config", help="check a scenario and its model")
    common(v, out=False)
    return p


def _load(args):
    from .run import build_model
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        sc = sc.with_overrides(seed=args.seed)
    return sc, build_model(sc, args.model)


def _cmd_run(args) -> int:
    from .run import run_scenario, sweep_swing
    sc, model = _load(args)
    if sc.sweep_T_s:
        res = sweep_swing(sc, args.out, model=model)
        print(json.dumps(res.to_dict(), indent=2))
        return EXIT_OK
    summ = run_scenario(sc, args.out, model=model, pipelined=not args.sync_lqr,
                        ticks_per_log=args.ticks_per_log)
    d = summ.deterministic()
    d["status"] = summ.status
    print(json.dumps(d, indent=2))
    if summ.fault is None:
        return EXIT_OK
    return EXIT_SIM if summ.fault.startswith("simulation") else EXIT_SOLVER


def _cmd_bench(args) -> int:
    from .run import benchmark, benchmark_planner
    sc, model = _load(args)
    try:
        if args.planner_only:
            rep = benchmark_planner(args.repetitions, sc.planner.N, args.warmup, sc.seed)
        else:
            rep = benchmark(sc, args.repetitions, args.warmup, pipelined=not args.sync_lqr,
                            model=model)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    text = json.dumps(asdict(rep), indent=2)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.json").write_text(text + "\n")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plots import emit_plots
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out / "log.csv"
    try:
        written = emit_plots(log_path, out)
    except OSError as exc:
        raise ConfigError(f"{log_path}: {exc.strerror}") from exc
    for name, p in written.items():
        print(f"{name}: {p}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    sc, model = _load(args)
    print(f"{args.scenario}: ok ({sc.name}, {sc.duration:g} s, model with {model.n} joints)")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cmds = {"run": _cmd_run, "bench": _cmd_bench, "plot": _cmd_plot,
            "validate-config": _cmd_validate}
    try:
        return cmds[args.cmd](args)
    except (ConfigError, LogSchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
