"""Parking trajectories for a kinematic car via successive convexification."""

from .reeds_shepp import RsPath, shortest_path
from .scenarios import Scenario, parallel_parking, reverse_parking, seeded, validate_trajectory
from .scvx_solver import MultiSegmentSolution, ScvxError, ScvxParams, scvx_run
from .vehicle_model import CarControl, CarState, ModelParams

__version__ = "0.1.0"
__all__ = [
    "CarControl", "CarState", "ModelParams", "MultiSegmentSolution", "RsPath", "Scenario", "ScvxError",
    "ScvxParams", "parallel_parking", "reverse_parking", "scvx_run", "seeded", "shortest_path", "validate_trajectory",
]
