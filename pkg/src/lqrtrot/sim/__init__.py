"""Penalty-contact rigid-body simulator used in place of hardware."""
from .contact import ContactParams, contact_forces, foot_gap
from .disturbance import Disturbance, apply_disturbance, wrench_to_generalized
from .terrain import FlatTerrain, Heightfield, bumpy_terrain
from .world import SimulationFault, StepResult, World, clamp_command, step

__all__ = [
    "ContactParams", "Disturbance", "FlatTerrain", "Heightfield", "SimulationFault",
    "StepResult", "World", "apply_disturbance", "bumpy_terrain", "clamp_command",
    "contact_forces", "foot_gap", "step", "wrench_to_generalized",
]
