"""State-lattice planning: grid model, motion primitives, lattice graph and weighted A*."""

from planning.errors import (
    InvalidParameterError,
    InvalidQueryError,
    NavigationError,
    NoPathError,
    NotOnPathError,
    PlanningBudgetExceeded,
    PlanningError,
)
from planning.grid_map import GridMap, LatticeNode, Pose
from planning.lattice import LatticeGraph, placed_sweep_collision_free, successors
from planning.path import Path, suffix_from
from planning.planner import LatticePlanner, PlanQuery, plan
from planning.primitives import MotionPrimitive, PrimitiveSet, build_primitives

__all__ = [
    "GridMap", "LatticeNode", "Pose", "MotionPrimitive", "PrimitiveSet", "build_primitives",
    "LatticeGraph", "placed_sweep_collision_free", "successors", "Path", "suffix_from",
    "LatticePlanner", "PlanQuery", "plan", "NavigationError", "InvalidParameterError",
    "PlanningError", "NoPathError", "PlanningBudgetExceeded", "InvalidQueryError", "NotOnPathError",
]
