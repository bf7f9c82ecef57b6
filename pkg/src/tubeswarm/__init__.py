"""Swarm guidance through trapezoid virtual tubes with disc obstacles."""

from .controller import (ControlParams, FeasibilityReport, Snapshot,
                         speed_angle_bound, u1_basic, u1_modified,
                         u2_avoidance, u34_panel, u34_projected,
                         validate_feasibility, velocity_command)
from .errors import SafetyAbort, TubeSwarmError, ValidationError
from .geometry import (Obstacle, TrapezoidTube, TubeRegion, build_tube,
                       classify, contains, dist_left, dist_right,
                       finishing_reached)
from .partition import (ObstacleTriangle, TubePartition, build_partition,
                        build_triangle, locate, partition_dump,
                        sort_obstacles, switched_command)
from .potentials import BarrierParams, Panel, panel_grad, panel_phi, sat, v_n
from .scenario import Scenario
from .simulator import SimConfig, SimResult, StepMetrics, run, validate_initial

__version__ = "0.1.0"

__all__ = [
    "BarrierParams", "ControlParams", "FeasibilityReport", "Obstacle",
    "ObstacleTriangle", "Panel", "SafetyAbort", "Scenario", "SimConfig",
    "SimResult", "Snapshot", "StepMetrics", "TrapezoidTube", "TubePartition",
    "TubeRegion", "TubeSwarmError", "ValidationError", "build_partition",
    "build_triangle", "build_tube", "classify", "contains", "dist_left",
    "dist_right", "finishing_reached", "locate", "panel_grad", "panel_phi",
    "partition_dump", "run", "sat", "sort_obstacles", "speed_angle_bound",
    "switched_command", "u1_basic", "u1_modified", "u2_avoidance",
    "u34_panel", "u34_projected", "v_n", "validate_feasibility",
    "validate_initial", "velocity_command",
]
