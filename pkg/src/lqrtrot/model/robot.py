"""Floating-base robot model, state containers and dynamics quantities."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from . import _kernels as K

FOOT_NAMES = ("LF", "RF", "LH", "RH")
GRAVITY = np.array([0.0, 0.0, -9.81])


class ModelError(ValueError):
    """Raised for malformed or physically invalid model files."""


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Kinematic tree rooted at a floating base.

    Arrays are indexed by link; link 0 is the base and link ``i`` is moved by
    actuated joint ``i - 1``.
    """

    name: str
    link_names: tuple
    joint_names: tuple
    parent: np.ndarray
    joint_rot: np.ndarray
    joint_pos: np.ndarray
    axis: np.ndarray
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray
    spatial_inertia: np.ndarray
    foot_names: tuple
    foot_link: np.ndarray
    foot_offset: np.ndarray
    torque_limits: np.ndarray
    nominal: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.joint_names)

    @property
    def nv(self) -> int:
        return 6 + self.n

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def foot_index(self, name: str) -> int:
        try:
            return self.foot_names.index(name)
        except ValueError:
            raise KeyError(f"unknown foot {name!r}; model has {self.foot_names}") from None

    def leg_joints(self, foot: str) -> np.ndarray:
        """Velocity indices of the joints between the base and ``foot``."""
        idx = []
        link = int(self.foot_link[self.foot_index(foot)])
        while link > 0:
            idx.append(5 + link)
            link = int(self.parent[link])
        return np.array(sorted(idx), dtype=np.int64)

    def kernel_args(self):
        return (self.parent, self.joint_rot, self.joint_pos, self.axis,
                self.spatial_inertia)

    def nominal_state(self, base_height: float | None = None) -> "GeneralizedState":
        """Standing configuration from the model's ``nominal`` joint table."""
        qj = np.array([self.nominal.get(j, 0.0) for j in self.joint_names])
        z = self.nominal.get("base_height", 0.0) if base_height is None else base_height
        return GeneralizedState(np.array([0.0, 0.0, z]), np.array([1.0, 0, 0, 0]),
                                qj, np.zeros(self.nv))


@dataclass
class GeneralizedState:
    """Base pose, joint angles and mixed-frame generalized velocity.

    ``v = [v_I (inertial linear), w_B (body angular), qd]``.
    """

    base_position: np.ndarray
    base_orientation: np.ndarray
    q_j: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.base_position = np.asarray(self.base_position, dtype=float)
        self.base_orientation = np.asarray(self.base_orientation, dtype=float)
        self.q_j = np.asarray(self.q_j, dtype=float)
        self.v = np.asarray(self.v, dtype=float)

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(self.base_position.copy(), self.base_orientation.copy(),
                                self.q_j.copy(), self.v.copy())

    @property
    def rotation(self) -> np.ndarray:
        return K.quat_to_rot(self.base_orientation)

    def validate(self, model: RobotModel) -> None:
        if abs(np.linalg.norm(self.base_orientation) - 1.0) > 1e-9:
            raise ValueError("base quaternion is not unit norm")
        if self.q_j.shape != (model.n,) or self.v.shape != (model.nv,):
            raise ValueError(
                f"state dims q_j={self.q_j.shape}, v={self.v.shape} do not match n={model.n}")


@dataclass(frozen=True)
class ContactSet:
    """Feet in point contact; each contributes three constraint rows."""

    active: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "active", tuple(self.active))
        bad = [f for f in self.active if f not in FOOT_NAMES]
        if bad:
            raise KeyError(f"unknown foot name(s) {bad}")

    @property
    def k(self) -> int:
        return len(self.active)

    def indices(self, model: RobotModel) -> np.ndarray:
        return np.array([model.foot_index(f) for f in self.active], dtype=np.int64)


@dataclass(frozen=True)
class Placements:
    foot_positions: dict
    base_position: np.ndarray
    base_rotation: np.ndarray
    com: np.ndarray
    com_velocity: np.ndarray


# --------------------------------------------------------------------------
# loading

def _schema():
    return json.loads(resources.files("lqrtrot.model").joinpath("schema.json").read_text())


def _rpy_matrix(rpy) -> np.ndarray:
    r, p, y = rpy
    Rx = K.axis_rot(np.array([1.0, 0, 0]), r)
    Ry = K.axis_rot(np.array([0, 1.0, 0]), p)
    Rz = K.axis_rot(np.array([0, 0, 1.0]), y)
    return Rz @ Ry @ Rx


def _spatial_inertia(m, c, Ic):
    C = K.skew(np.asarray(c, dtype=float))
    I6 = np.zeros((6, 6))
    I6[:3, :3] = Ic + m * C @ C.T
    I6[:3, 3:] = m * C
    I6[3:, :3] = m * C.T
    I6[3:, 3:] = m * np.eye(3)
    return I6


def load_model(model_text: str) -> RobotModel:
    """Parse and validate a JSON model description."""
    try:
        doc = json.loads(model_text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ModelError(f"schema violation at {where}: {exc.message}") from exc

    links = {}
    for ld in doc["links"]:
        if ld["name"] in links:
            raise ModelError(f"duplicate link {ld['name']!r}")
        if ld["mass"] <= 0:
            raise ModelError(f"link {ld['name']!r}: mass must be positive, got {ld['mass']}")
        Ic = np.array(ld["inertia"], dtype=float)
        if not np.allclose(Ic, Ic.T, atol=1e-12):
            raise ModelError(f"link {ld['name']!r}: inertia tensor is not symmetric")
        if np.linalg.eigvalsh(Ic).min() <= 0:
            raise ModelError(f"link {ld['name']!r}: inertia tensor is not positive definite")
        links[ld["name"]] = ld

    floating = [j for j in doc["joints"] if j["kind"] == "floating"]
    if len(floating) != 1:
        raise ModelError(f"expected exactly one floating joint, found {len(floating)}")
    root = floating[0]["child"]
    if root not in links:
        raise ModelError(f"floating joint child {root!r} is not a link")

    children: dict[str, list] = {}
    seen_child = {root}
    for jd in doc["joints"]:
        if jd["kind"] == "floating":
            continue
        for key in ("parent", "axis"):
            if key not in jd:
                raise ModelError(f"joint {jd['name']!r}: missing {key!r}")
        if jd["child"] not in links or jd["parent"] not in links:
            raise ModelError(f"joint {jd['name']!r}: references unknown link")
        if jd["child"] in seen_child:
            raise ModelError(f"joint {jd['name']!r}: link {jd['child']!r} has two parents (cycle)")
        seen_child.add(jd["child"])
        ax = np.array(jd["axis"], dtype=float)
        if abs(np.linalg.norm(ax) - 1.0) > 1e-9:
            raise ModelError(f"joint {jd['name']!r}: axis must be unit length")
        children.setdefault(jd["parent"], []).append(jd)

    # breadth-first ordering keeps parents ahead of children
    order = [(root, None)]
    queue = [root]
    while queue:
        name = queue.pop(0)
        for jd in children.get(name, []):
            order.append((jd["child"], jd))
            queue.append(jd["child"])
    if len(order) != len(links):
        missing = sorted(set(links) - {o[0] for o in order})
        raise ModelError(f"links not connected to the floating base (cycle or orphan): {missing}")

    index = {name: i for i, (name, _) in enumerate(order)}
    nb = len(order)
    parent = np.full(nb, -1, dtype=np.int64)
    RT = np.tile(np.eye(3), (nb, 1, 1))
    pT = np.zeros((nb, 3))
    axis = np.zeros((nb, 3))
    mass = np.zeros(nb)
    com = np.zeros((nb, 3))
    inertia = np.zeros((nb, 3, 3))
    I6 = np.zeros((nb, 6, 6))
    limits = []
    jnames = []
    for i, (name, jd) in enumerate(order):
        ld = links[name]
        mass[i] = ld["mass"]
        com[i] = ld.get("com_offset", [0.0, 0.0, 0.0])
        inertia[i] = np.array(ld["inertia"], dtype=float)
        I6[i] = _spatial_inertia(mass[i], com[i], inertia[i])
        if jd is not None:
            parent[i] = index[jd["parent"]]
            RT[i] = _rpy_matrix(jd.get("origin_rpy", [0.0, 0.0, 0.0]))
            pT[i] = jd.get("origin_xyz", [0.0, 0.0, 0.0])
            axis[i] = jd["axis"]
            limits.append(float(jd.get("torque_limit", np.inf)))
            jnames.append(jd["name"])

    fnames, flink, foff = [], [], []
    for fd in doc["feet"]:
        if fd["link"] not in index:
            raise ModelError(f"foot {fd['name']!r}: unknown link {fd['link']!r}")
        if fd["name"] in fnames:
            raise ModelError(f"duplicate foot {fd['name']!r}")
        fnames.append(fd["name"])
        flink.append(index[fd["link"]])
        foff.append(fd.get("offset", [0.0, 0.0, 0.0]))

    return RobotModel(
        name=doc.get("name", "robot"),
        link_names=tuple(o[0] for o in order),
        joint_names=tuple(jnames),
        parent=parent,
        joint_rot=np.ascontiguousarray(RT),
        joint_pos=pT,
        axis=axis,
        mass=mass,
        com=com,
        inertia=inertia,
        spatial_inertia=I6,
        foot_names=tuple(fnames),
        foot_link=np.array(flink, dtype=np.int64),
        foot_offset=np.array(foff, dtype=float).reshape(-1, 3),
        torque_limits=np.array(limits),
        nominal=dict(doc.get("nominal", {})),
    )


def load_model_file(path) -> RobotModel:
    return load_model(Path(path).read_text())


def reference_quadruped() -> RobotModel:
    """The shipped 12-joint, ~35 kg trotting quadruped."""
    text = resources.files("lqrtrot.data").joinpath("quadruped.json").read_text()
    return load_model(text)


# --------------------------------------------------------------------------
# dynamics quantities

def mass_matrix(model: RobotModel, state: GeneralizedState) -> np.ndarray:
    """Joint-space inertia matrix in mixed velocity coordinates (CRBA)."""
    return K.mass_matrix_mixed(*model.kernel_args(), state.base_position,
                               state.base_orientation, state.q_j)


def inverse_dynamics(model, state, qdd, gravity=GRAVITY) -> np.ndarray:
    """Generalized force ``M qdd + h`` from a recursive Newton-Euler pass."""
    return K.inverse_dynamics_mixed(*model.kernel_args(), state.base_position,
                                    state.base_orientation, state.q_j, state.v,
                                    np.asarray(qdd, dtype=float),
                                    np.asarray(gravity, dtype=float))


def bias_forces(model, state, gravity=GRAVITY) -> np.ndarray:
    """Coriolis, centrifugal and gravity vector ``h`` (RNEA with qdd = 0)."""
    return inverse_dynamics(model, state, np.zeros(model.nv), gravity)


def _feet_rows(Jall, idx):
    if len(idx) == 0:
        return np.zeros((0, Jall.shape[1]))
    return K.select_rows(Jall, idx)


def _placements(model, state):
    return K.link_transforms(model.parent, model.joint_rot, model.joint_pos, model.axis,
                             state.base_position, state.base_orientation, state.q_j)


def contact_jacobian(model, state, contacts: ContactSet) -> np.ndarray:
    """Stacked point-contact Jacobian (3k x nv) mapping v to foot velocities in I."""
    idx = contacts.indices(model)
    Rw, pw, _ = _placements(model, state)
    Jall = K.foot_jacobians_mixed(model.parent, model.axis, Rw, pw, model.foot_link,
                                  model.foot_offset, model.nv)
    return _feet_rows(Jall, idx)


def kinematics(model, state) -> Placements:
    Rw, pw, Eup = _placements(model, state)
    nu_b, gdot = K.body_to_mixed(Rw[0], state.v)
    fp, fv, fa = K.feet_state(model.parent, model.joint_pos, model.axis, Eup, Rw, pw,
                              model.foot_link, model.foot_offset, nu_b, gdot)
    c, cd = K.com_state(model.parent, model.joint_pos, model.axis, Eup, Rw, pw,
                        model.mass, model.com, nu_b)
    return Placements(
        foot_positions={n: fp[i] for i, n in enumerate(model.foot_names)},
        base_position=state.base_position.copy(),
        base_rotation=Rw[0],
        com=c,
        com_velocity=cd,
    )


@dataclass
class DynamicsSnapshot:
    """Everything a control tick needs from one kinematic/dynamic pass."""

    M: np.ndarray
    h: np.ndarray
    J_feet: np.ndarray
    foot_pos: np.ndarray
    foot_vel: np.ndarray
    foot_bias_acc: np.ndarray
    com: np.ndarray
    com_vel: np.ndarray

    def jacobian(self, idx: Sequence[int]) -> np.ndarray:
        return _feet_rows(self.J_feet, np.asarray(idx, dtype=np.int64))


def snapshot(model: RobotModel, state: GeneralizedState, gravity=GRAVITY) -> DynamicsSnapshot:
    out = K.full_snapshot(*model.kernel_args(), model.mass, model.com, model.foot_link,
                          model.foot_offset, state.base_position, state.base_orientation,
                          state.q_j, state.v, np.asarray(gravity, dtype=float))
    return DynamicsSnapshot(*out)


def euler_zyx(quat) -> np.ndarray:
    """(roll, pitch, yaw) of a unit quaternion, intrinsic Z-Y-X."""
    return K.quat_to_euler(np.asarray(quat, dtype=float))


def quat_from_euler(rpy) -> np.ndarray:
    return K.euler_to_quat(np.asarray(rpy, dtype=float))
