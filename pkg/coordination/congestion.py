#!/usr/bin/env python3
"""
Congestion-aware path selection.

Candidates are the current path plus one path through each successor
primitive of the agent's node. Each candidate is scored with

    C = k_c * collision + k_g * goal + k_n * crowding

and the argmin replaces the agent's plan once it beats the current path by
the switch margin. Candidate tails are first planned around the cells the
neighbors occupy and fall back to the static map when that fails.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from planning.errors import InvalidParameterError, PlanningError
from planning.grid_map import Cell, Pose
from planning.lattice import LatticeGraph
from planning.path import Path
from planning.planner import LatticePlanner, PlanQuery

logger = logging.getLogger(__name__)

RELATIVE_TIE = 1e-9
MIN_CROWDING_DISTANCE = 1e-3


@dataclass(frozen=True)
class CongestionWeights:
    k_c: float = 10.0
    k_g: float = 1.0
    k_n: float = 2.0
    crowding_factor: float = 5.0
    horizon_steps: int = 20
    collision_penalty: float = 1.0

    def __post_init__(self):
        if min(self.k_c, self.k_g, self.k_n) < 0:
            raise InvalidParameterError("congestion weights must be nonnegative")
        if self.crowding_factor <= 0:
            raise InvalidParameterError("crowding_factor must be positive")
        if self.horizon_steps <= 0:
            raise InvalidParameterError("horizon_steps must be positive")
        if self.collision_penalty <= 0:
            raise InvalidParameterError("collision_penalty must be positive")

    def scaled(self, factor: float) -> "CongestionWeights":
        return CongestionWeights(self.k_c * factor, self.k_g * factor, self.k_n * factor,
                                 self.crowding_factor, self.horizon_steps, self.collision_penalty)


@dataclass(frozen=True, eq=False)
class NeighborSnapshot:
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    velocities: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if np.any(self.radii <= 0):
            raise InvalidParameterError("neighbor radii must be positive")

    @classmethod
    def from_lists(cls, positions: Sequence[Sequence[float]], velocities: Sequence[Sequence[float]] = None,
                   radii: Sequence[float] = None, default_radius: float = 0.4) -> "NeighborSnapshot":
        count = len(positions)
        pos = np.asarray(positions, dtype=float).reshape(count, 2)
        vel = np.zeros((count, 2)) if velocities is None else np.asarray(velocities, dtype=float).reshape(count, 2)
        rad = np.full(count, default_radius) if radii is None else np.asarray(radii, dtype=float)
        return cls(pos, vel, rad)

    def __len__(self) -> int:
        return int(self.positions.shape[0])


@dataclass(frozen=True)
class CongestionTerms:
    collision: float
    goal: float
    crowding: float

    def weighted(self, weights: CongestionWeights) -> float:
        return weights.k_c * self.collision + weights.k_g * self.goal + weights.k_n * self.crowding


@dataclass(frozen=True)
class ResolutionRequest:
    """What conflict resolution needs to know about the agent being resolved."""
    pose: Pose
    path: Path
    goal: Pose
    radius: float
    blocked: FrozenSet[Cell] = frozenset()
    avoid: FrozenSet[Cell] = frozenset()


def occupied_cells(neighbors: NeighborSnapshot, resolution: float = 1.0) -> FrozenSet[Cell]:
    """Cells whose squares overlap a neighbor disc."""
    cells = set()
    for (x, y), radius in zip(neighbors.positions.tolist(), neighbors.radii.tolist()):
        columns = range(int(math.floor((x - radius) / resolution)), int(math.floor((x + radius) / resolution)) + 1)
        rows = range(int(math.floor((y - radius) / resolution)), int(math.floor((y + radius) / resolution)) + 1)
        for cell_y in rows:
            for cell_x in columns:
                dx = max(cell_x * resolution - x, 0.0, x - (cell_x + 1) * resolution)
                dy = max(cell_y * resolution - y, 0.0, y - (cell_y + 1) * resolution)
                if math.hypot(dx, dy) < radius:
                    cells.add((cell_x, cell_y))
    return frozenset(cells)


def _horizon(path: Path, horizon_steps: int) -> Tuple[np.ndarray, np.ndarray]:
    count = min(horizon_steps, len(path.poses))
    cumulative = np.asarray(path.cumulative[:count], dtype=float) - path.cumulative[0]
    return path.positions[:count], cumulative


def collision_cost(path: Path, neighbors: NeighborSnapshot, nominal_speed: float, radius: float,
                   horizon_steps: int = 20, collision_penalty: float = 1.0) -> float:
    """
    ``collision_penalty`` for every neighbor whose constant-velocity
    extrapolation comes within R_i + R_j of the agent at the same time.
    """
    if nominal_speed <= 0:
        raise InvalidParameterError("nominal_speed must be positive")
    if len(neighbors) == 0:
        return 0.0
    points, cumulative = _horizon(path, horizon_steps)
    times = cumulative / nominal_speed
    predicted = neighbors.positions[None, :, :] + times[:, None, None] * neighbors.velocities[None, :, :]
    distance = np.linalg.norm(predicted - points[:, None, :], axis=2)
    conflicts = np.any(distance <= radius + neighbors.radii[None, :], axis=0)
    return float(collision_penalty * np.count_nonzero(conflicts))


def goal_cost(candidate: Path, candidates: Sequence[Path]) -> float:
    return max(0.0, candidate.length - min(path.length for path in candidates))


def crowding_cost(path: Path, neighbors: NeighborSnapshot, radius: float, nominal_speed: float,
                  crowding_factor: float = 5.0, horizon_steps: int = 20,
                  control_period: float = 0.1) -> float:
    """Sum of 1 / (t * d) over waypoints and neighbors with d <= crowding_factor * R_i."""
    if nominal_speed <= 0:
        raise InvalidParameterError("nominal_speed must be positive")
    if len(neighbors) == 0:
        return 0.0
    points, cumulative = _horizon(path, horizon_steps)
    times = np.maximum(cumulative / nominal_speed, control_period)
    distance = np.linalg.norm(points[:, None, :] - neighbors.positions[None, :, :], axis=2)
    close = distance <= crowding_factor * radius
    contribution = 1.0 / (times[:, None] * np.maximum(distance, MIN_CROWDING_DISTANCE))
    return float(np.sum(np.where(close, contribution, 0.0)))


def congestion_terms(path: Path, candidates: Sequence[Path], neighbors: NeighborSnapshot,
                     weights: CongestionWeights, radius: float, nominal_speed: float,
                     control_period: float = 0.1) -> CongestionTerms:
    return CongestionTerms(
        collision_cost(path, neighbors, nominal_speed, radius, weights.horizon_steps,
                       weights.collision_penalty),
        goal_cost(path, candidates),
        crowding_cost(path, neighbors, radius, nominal_speed, weights.crowding_factor,
                      weights.horizon_steps, control_period),
    )


def congestion(path: Path, candidates: Sequence[Path], neighbors: NeighborSnapshot,
               weights: CongestionWeights, radius: float, nominal_speed: float,
               control_period: float = 0.1) -> float:
    return congestion_terms(path, candidates, neighbors, weights, radius, nominal_speed,
                            control_period).weighted(weights)


def _plan_tail(planner: LatticePlanner, start: Pose, goal: Pose, epsilon: float,
               attempts: Sequence[FrozenSet[Cell]]) -> Optional[Path]:
    for blocked in attempts:
        try:
            return planner.plan(PlanQuery(start, goal, epsilon, planner.expansion_budget), blocked)
        except PlanningError as e:
            logger.debug(f"Tail from ({start.x:.2f}, {start.y:.2f}) with {len(blocked)} blocked cells: {e}")
    return None


def candidate_paths(agent_pose: Pose, current_path: Path, graph: LatticeGraph, planner: LatticePlanner,
                    goal: Pose, blocked: Iterable[Cell] = (), epsilon: float = 2.0,
                    avoid: Iterable[Cell] = ()) -> List[Path]:
    """
    The current path followed by one path per successor primitive:
    the primitive itself plus a plan from its end node to the goal.

    Tails are planned with ``avoid`` cells (typically the ones neighbors
    stand on) as extra obstacles first, then without them. Candidates
    whose tail cannot be planned either way are dropped; duplicates removed.
    """
    blocked = frozenset(blocked)
    view = graph.view(blocked)
    node = view.node_at(agent_pose)
    detour = blocked | (frozenset(avoid) - {node.cell})
    attempts = [detour, blocked] if detour != blocked else [blocked]
    candidates = [current_path]
    seen = {current_path.key}
    for successor, primitive, _ in view.successors(node):
        tail = _plan_tail(planner, view.node_pose(successor), goal, epsilon, attempts)
        if tail is None:
            logger.debug(f"Candidate through {primitive.kind} dropped")
            continue
        head = Path.from_steps(node, view.node_pose(node), [(successor, primitive)], view.resolution,
                               view.node_pose)
        candidate = head.concat(tail)
        if candidate.key in seen:
            continue
        seen.add(candidate.key)
        candidates.append(candidate)
    return candidates


def _better(cost: float, length: float, best_cost: float, best_length: float) -> bool:
    cost_tie = abs(cost - best_cost) <= RELATIVE_TIE * max(abs(cost), abs(best_cost))
    if not cost_tie:
        return cost < best_cost
    length_tie = abs(length - best_length) <= RELATIVE_TIE * max(abs(length), abs(best_length), 1.0)
    return not length_tie and length < best_length


def select_candidate(candidates: Sequence[Path], neighbors: NeighborSnapshot, weights: CongestionWeights,
                     radius: float, nominal_speed: float,
                     control_period: float = 0.1) -> Tuple[int, List[float]]:
    """
    Index of the minimum-congestion candidate and all scores. Scores within
    a relative 1e-9 tie, then shorter length wins, then the lower index.
    """
    scores = [congestion(path, candidates, neighbors, weights, radius, nominal_speed, control_period)
              for path in candidates]
    best = 0
    for index in range(1, len(candidates)):
        if _better(scores[index], candidates[index].length, scores[best], candidates[best].length):
            best = index
    return best, scores


def conflict_resolution(agent: ResolutionRequest, graph: LatticeGraph, planner: LatticePlanner,
                        neighbors: NeighborSnapshot, weights: CongestionWeights, nominal_speed: float,
                        control_period: float = 0.1, epsilon: float = 2.0,
                        agent_id: Optional[int] = None, switch_margin: float = 0.0,
                        admissible: Optional[Callable[[Path], bool]] = None) -> Path:
    """
    The minimum-congestion candidate, or the agent's current path when no
    candidate scores at least ``switch_margin`` below it. Candidates
    rejected by ``admissible`` are not scored.
    """
    try:
        candidates = candidate_paths(agent.pose, agent.path, graph, planner, agent.goal, agent.blocked, epsilon,
                                     agent.avoid)
    except PlanningError as e:
        logger.warning(f"Agent {agent_id}: conflict resolution skipped: {e}")
        return agent.path
    if admissible is not None:
        candidates = candidates[:1] + [path for path in candidates[1:] if admissible(path)]
    index, scores = select_candidate(candidates, neighbors, weights, agent.radius, nominal_speed,
                                     control_period)
    if index != 0 and switch_margin > 0 and scores[index] > scores[0] - switch_margin:
        logger.debug(f"Agent {agent_id}: keeping current path ({scores[0]:.3f} vs {scores[index]:.3f})")
        return agent.path
    logger.debug(f"Agent {agent_id}: candidate {index} of {len(candidates)} selected "
                 f"(score {scores[index]:.3f})")
    return candidates[index]
