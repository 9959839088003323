"""Scenario files: YAML documents validated against a versioned schema."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from ..gait import UserCommand
from ..sim import Disturbance

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid scenario or model configuration."""


def _schema():
    return json.loads(resources.files("lqrtrot.runner").joinpath("scenario_schema.json").read_text())


@dataclass(frozen=True)
class PlannerConfig:
    N: int = 3
    T_s: float = 0.3
    Q: float = 1000.0
    R: float = 1.0
    z_com: float = 0.42
    g: float = 9.8
    r: float = 0.41
    theta0: float = 0.56
    apex: float = 0.08
    workspace_radius: float = 0.3
    v_max: float = 1.5
    omega_max: float = 1.0


@dataclass(frozen=True)
class ControllerConfig:
    type: str = "lqr"
    q_pose: float = 1500.0
    q_rate: float = 1.0
    r: float = 0.03
    swing_scale: float = 10.0
    eps: float = 1e-5
    mu: float = 0.6
    pd_kp: tuple = (400.0, 400.0, 400.0, 400.0, 400.0, 400.0)
    pd_kd: tuple = (40.0, 40.0, 40.0, 40.0, 40.0, 40.0)
    swing_kp: tuple = (2000.0, 2000.0, 2000.0)
    swing_kd: tuple = (60.0, 60.0, 60.0)
    hold_cycles: int = 10
    feedforward: bool = True


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.0005
    kp: float = 3e4
    kd: float = 1e3
    kt: float = 1e4
    mu: float = 0.8


@dataclass(frozen=True)
class NoiseConfig:
    position: float = 0.0
    orientation: float = 0.0
    velocity: float = 0.0
    joint: float = 0.0

    @property
    def enabled(self) -> bool:
        return any(v > 0 for v in (self.position, self.orientation, self.velocity, self.joint))


@dataclass(frozen=True)
class CommandPoint:
    t: float
    command: UserCommand
    ramp: float = 0.0


@dataclass(frozen=True)
class Scenario:
    duration: float
    name: str = "scenario"
    model: str | None = None
    seed: int = 0
    gait: str = "trot"
    settle: float = 0.25
    transient: float = 2.0
    gain_every: int = 40
    commands: tuple = ()
    disturbances: tuple = ()
    terrain: dict = field(default_factory=lambda: {"type": "flat"})
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    min_height: float = 0.2
    max_tilt: float = 1.0
    sweep_T_s: tuple = ()
    sweep_controllers: tuple = ("lqr", "pd")
    base_dir: str = "."

    def command_at(self, t: float) -> UserCommand:
        """Piecewise-constant schedule, with optional linear ramps into a point."""
        cur = UserCommand()
        prev = UserCommand()
        for cp in self.commands:
            if t < cp.t:
                break
            prev, cur = cur, cp.command
            if cp.ramp > 0 and t < cp.t + cp.ramp:
                a = (t - cp.t) / cp.ramp
                return UserCommand(prev.vx + a * (cur.vx - prev.vx),
                                   prev.vy + a * (cur.vy - prev.vy),
                                   prev.omega_z + a * (cur.omega_z - prev.omega_z))
        return cur

    def with_overrides(self, **kw) -> "Scenario":
        from dataclasses import replace
        return replace(self, **kw)


def _sub(cls, doc, key):
    d = doc.get(key, {}) or {}
    out = {}
    for k, v in d.items():
        out[k] = tuple(v) if isinstance(v, list) else v
    return cls(**out)


def scenario_from_dict(doc: dict, base_dir=".") -> Scenario:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"scenario field {where}: {exc.message}") from exc
    cmds = []
    last = -np.inf
    for c in doc.get("commands", []):
        if c["t"] <= last:
            raise ConfigError("command schedule times must be strictly increasing")
        last = c["t"]
        cmds.append(CommandPoint(float(c["t"]), UserCommand(c.get("vx", 0.0), c.get("vy", 0.0),
                                                            c.get("omega_z", 0.0)),
                                 float(c.get("ramp", 0.0))))
    dist = tuple(Disturbance(d["start"], d["duration"],
                             tuple(d.get("force", [0, 0, 0])) + tuple(d.get("moment", [0, 0, 0])))
                 for d in doc.get("disturbances", []))
    fall = doc.get("fall", {})
    sweep = doc.get("sweep", {})
    ts = [float(x) for x in sweep.get("T_s", [])]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ConfigError("sweep T_s values must be strictly increasing")
    try:
        return Scenario(
            duration=float(doc["duration"]), name=doc.get("name", "scenario"),
            model=doc.get("model"), seed=int(doc.get("seed", 0)), gait=doc.get("gait", "trot"),
            settle=float(doc.get("settle", 0.25)), transient=float(doc.get("transient", 2.0)),
            gain_every=int(doc.get("gain_every", 40)), commands=tuple(cmds), disturbances=dist,
            terrain=dict(doc.get("terrain", {"type": "flat"})),
            planner=_sub(PlannerConfig, doc, "planner"),
            controller=_sub(ControllerConfig, doc, "controller"),
            sim=_sub(SimConfig, doc, "sim"), noise=_sub(NoiseConfig, doc, "noise"),
            min_height=float(fall.get("min_height", 0.2)), max_tilt=float(fall.get("max_tilt", 1.0)),
            sweep_T_s=tuple(ts), sweep_controllers=tuple(sweep.get("controllers", ("lqr", "pd"))),
            base_dir=str(base_dir),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return scenario_from_dict(doc, base_dir=path.parent)


def shipped_scenario(name: str) -> Scenario:
    """Load one of the scenarios bundled with the package."""
    res = resources.files("lqrtrot.scenarios").joinpath(f"{name}.yaml")
    doc = yaml.safe_load(res.read_text())
    return scenario_from_dict(doc, base_dir=str(res.parent) if hasattr(res, "parent") else ".")


def shipped_scenarios() -> list:
    return sorted(p.name[:-5] for p in resources.files("lqrtrot.scenarios").iterdir()
                  if p.name.endswith(".yaml"))
