"""Floating-base rigid-body model and dynamics quantities."""
from .robot import (
    FOOT_NAMES,
    GRAVITY,
    ContactSet,
    DynamicsSnapshot,
    GeneralizedState,
    ModelError,
    Placements,
    RobotModel,
    bias_forces,
    contact_jacobian,
    euler_zyx,
    inverse_dynamics,
    kinematics,
    load_model,
    load_model_file,
    mass_matrix,
    quat_from_euler,
    reference_quadruped,
    snapshot,
)

__all__ = [
    "FOOT_NAMES", "GRAVITY", "ContactSet", "DynamicsSnapshot", "GeneralizedState",
    "ModelError", "Placements", "RobotModel", "bias_forces", "contact_jacobian",
    "euler_zyx", "inverse_dynamics", "kinematics", "load_model", "load_model_file",
    "mass_matrix", "quat_from_euler", "reference_quadruped", "snapshot",
]
