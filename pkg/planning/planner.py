#!/usr/bin/env python3
"""
Weighted A* over the state lattice with an anytime inflation schedule.

The heuristic is a reverse Dijkstra from the goal cell over the
position-only relaxation of the lattice, so it is admissible and consistent
with respect to primitive costs. Expanded nodes are never reopened.
"""

import heapq
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from planning.errors import InvalidQueryError, NoPathError, PlanningBudgetExceeded
from planning.grid_map import Cell, LatticeNode, Pose
from planning.lattice import LatticeGraph
from planning.path import Path

logger = logging.getLogger(__name__)

DEFAULT_EXPANSION_BUDGET = 200_000
DEFAULT_SCHEDULE = (2.0, 1.5, 1.0)
PLAN_CACHE_SIZE = 4096


@dataclass(frozen=True)
class PlanQuery:
    start: Pose
    goal: Pose
    epsilon: float = 1.0
    timeout: int = DEFAULT_EXPANSION_BUDGET
    goal_heading_free: bool = True

    def __post_init__(self):
        if self.epsilon < 1.0:
            raise InvalidQueryError(f"epsilon must be >= 1, got {self.epsilon}")
        if self.timeout <= 0:
            raise InvalidQueryError("timeout must be a positive expansion budget")


def goal_heuristic(graph: LatticeGraph, goal: Cell) -> np.ndarray:
    """
    Cost-to-go table over cells for a goal cell; ``inf`` where the goal is
    unreachable in the relaxed graph.
    """
    height, width = graph.grid_map.height_cells, graph.grid_map.width_cells
    table = np.full((height, width), math.inf)
    goal_x, goal_y = goal
    if not graph.grid_map.in_bounds(goal_x, goal_y):
        return table
    moves = graph.relaxed_moves()
    table[goal_y, goal_x] = 0.0
    frontier = [(0.0, goal_x, goal_y)]
    while frontier:
        dist, cell_x, cell_y = heapq.heappop(frontier)
        if dist > table[cell_y, cell_x]:
            continue
        for (dx, dy), cost, mask in moves:
            px, py = cell_x - dx, cell_y - dy
            if not (0 <= px < width and 0 <= py < height) or not mask[py, px]:
                continue
            candidate = dist + cost
            if candidate < table[py, px]:
                table[py, px] = candidate
                heapq.heappush(frontier, (candidate, px, py))
    table.setflags(write=False)
    return table


class LatticePlanner:
    """
    Planner bound to one lattice graph.

    Heuristic tables are cached per goal cell and built on the unblocked
    graph, which keeps them admissible for every blocked view. Plans are
    cached per (start node, goal cell, epsilon, blocked cells).
    """

    def __init__(self, graph: LatticeGraph, expansion_budget: int = DEFAULT_EXPANSION_BUDGET):
        self.graph = graph
        self.expansion_budget = expansion_budget
        self._heuristics: Dict[Cell, np.ndarray] = {}
        self._plans: "OrderedDict[tuple, Path]" = OrderedDict()
        self.expansions = 0

    def heuristic_table(self, goal: Cell) -> np.ndarray:
        table = self._heuristics.get(goal)
        if table is None:
            table = goal_heuristic(self.graph, goal)
            self._heuristics[goal] = table
        return table

    def heuristic(self, node: LatticeNode, goal: Cell) -> float:
        return float(self.heuristic_table(goal)[node.cell_y, node.cell_x])

    def plan(self, query: PlanQuery, blocked: Iterable[Cell] = ()) -> Path:
        """
        Weighted A* from the query start to the goal cell.

        Raises:
            InvalidQueryError: start or goal is not a valid lattice node
            NoPathError: the goal is unreachable
            PlanningBudgetExceeded: the expansion budget ran out
        """
        path, _ = self._search(query, frozenset(blocked), query.timeout)
        return path

    def plan_anytime(self, query: PlanQuery, schedule: Sequence[float] = DEFAULT_SCHEDULE,
                     blocked: Iterable[Cell] = ()) -> List[Path]:
        """
        Run the search for each inflation in ``schedule`` under one shared
        expansion budget and return every strictly improving path.
        """
        blocked = frozenset(blocked)
        remaining = query.timeout
        improved: List[Path] = []
        for epsilon in schedule:
            step_query = PlanQuery(query.start, query.goal, max(1.0, epsilon), remaining,
                                   query.goal_heading_free)
            try:
                path, used = self._search(step_query, blocked, remaining)
            except PlanningBudgetExceeded:
                if improved:
                    logger.warning(f"Anytime schedule stopped at epsilon={epsilon}: budget exhausted")
                    break
                raise
            remaining -= used
            if not improved or path.length < improved[-1].length - 1e-12:
                improved.append(path)
            logger.debug(f"Anytime plan epsilon={epsilon}: length {path.length:.3f}")
            if remaining <= 0:
                break
        return improved

    def _search(self, query: PlanQuery, blocked: FrozenSet[Cell], budget: int) -> Tuple[Path, int]:
        graph = self.graph.view(blocked)
        start = graph.node_at(query.start)
        if not graph.is_valid_node(start):
            raise InvalidQueryError(f"start {start} is occupied or out of bounds")
        goal_cell = graph.grid_map.cell_of(query.goal.x, query.goal.y)
        if not graph.is_free_cell(goal_cell):
            raise InvalidQueryError(f"goal cell {goal_cell} is occupied or out of bounds")
        goal_node = None
        if not query.goal_heading_free:
            goal_node = graph.node_at(query.goal)

        key = (start, goal_node or goal_cell, query.epsilon, blocked)
        cached = self._plans.get(key)
        if cached is not None:
            self._plans.move_to_end(key)
            return cached, 0

        path, expansions = self._weighted_astar(graph, start, goal_cell, goal_node, query.epsilon, budget)
        self.expansions += expansions
        self._plans[key] = path
        if len(self._plans) > PLAN_CACHE_SIZE:
            self._plans.popitem(last=False)
        return path, expansions

    def _weighted_astar(self, graph: LatticeGraph, start: LatticeNode, goal_cell: Cell,
                        goal_node: Optional[LatticeNode], epsilon: float,
                        budget: int) -> Tuple[Path, int]:
        def is_goal(node: LatticeNode) -> bool:
            return node == goal_node if goal_node is not None else node.cell == goal_cell

        if is_goal(start):
            return Path.empty(start, graph.node_pose(start), graph.resolution), 0

        h = self.heuristic_table(goal_cell)
        if not math.isfinite(h[start.cell_y, start.cell_x]):
            raise NoPathError(f"goal {goal_cell} unreachable from {start}")

        g_cost: Dict[LatticeNode, float] = {start: 0.0}
        parent: Dict[LatticeNode, Tuple[LatticeNode, object]] = {}
        closed = set()
        frontier = [(epsilon * h[start.cell_y, start.cell_x], start.cell_x, start.cell_y, start.heading)]
        expansions = 0

        while frontier:
            _, cell_x, cell_y, heading = heapq.heappop(frontier)
            node = LatticeNode(cell_x, cell_y, heading)
            if node in closed:
                continue
            closed.add(node)
            if is_goal(node):
                return self._reconstruct(graph, start, node, parent), expansions
            expansions += 1
            if expansions > budget:
                raise PlanningBudgetExceeded(expansions)
            base = g_cost[node]
            for successor, primitive, cost in graph.successors(node):
                if successor in closed:
                    continue
                estimate = h[successor.cell_y, successor.cell_x]
                if not math.isfinite(estimate):
                    continue
                candidate = base + cost
                if candidate < g_cost.get(successor, math.inf) - 1e-12:
                    g_cost[successor] = candidate
                    parent[successor] = (node, primitive)
                    heapq.heappush(frontier, (candidate + epsilon * estimate, successor.cell_x,
                                              successor.cell_y, successor.heading))

        raise NoPathError(f"goal {goal_cell} unreachable from {start}")

    @staticmethod
    def _reconstruct(graph: LatticeGraph, start: LatticeNode, goal: LatticeNode,
                     parent: Dict[LatticeNode, Tuple[LatticeNode, object]]) -> Path:
        steps = []
        node = goal
        while node != start:
            previous, primitive = parent[node]
            steps.append((node, primitive))
            node = previous
        steps.reverse()
        return Path.from_steps(start, graph.node_pose(start), steps, graph.resolution, graph.node_pose)


def plan(graph: LatticeGraph, query: PlanQuery) -> Path:
    """One-shot planning call; use LatticePlanner directly to reuse heuristic tables."""
    return LatticePlanner(graph).plan(query)
