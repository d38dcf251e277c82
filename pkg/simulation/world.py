#!/usr/bin/env python3
"""
Simulation state: agents, their plans, and the shared lattice/reservation
resources built from a scenario.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from coordination.congestion import CongestionWeights
from coordination.corridor import Corridor, CorridorDirection, ReservationTable, detect_narrow_passages
from database.reservation_store import ReservationStore
from planning.errors import InvalidParameterError, PlanningError
from planning.grid_map import Cell, GridMap, Pose
from planning.lattice import LatticeGraph
from planning.path import Path
from planning.planner import LatticePlanner, PlanQuery
from planning.primitives import PrimitiveSet, build_primitives
from scenarios.model import AgentSpec, NavigationParams, Scenario

logger = logging.getLogger(__name__)


class AgentStatus(Enum):
    ACTIVE = "active"
    REACHED = "reached"
    COLLIDED = "collided"
    DEADLOCKED = "deadlocked"

    @property
    def terminal(self) -> bool:
        return self is not AgentStatus.ACTIVE


class SimulationMode(Enum):
    FULL = "full"
    BASELINE = "baseline"
    NO_CORRIDORS = "no-corridors"


@dataclass(frozen=True)
class Task:
    task_id: str
    goal: Pose


@dataclass
class AgentState:
    id: int
    radius: float
    pose: Pose
    path: Path
    goal: Pose
    task_id: str = "goal"
    path_index: int = 0
    status: AgentStatus = AgentStatus.ACTIVE
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    tasks: Deque[Task] = field(default_factory=deque)
    tasks_completed: int = 0
    traveled: float = 0.0
    history: Deque[Tuple[float, float]] = field(default_factory=deque)
    hold_steps: int = 0
    backing_off: bool = False
    avoided: FrozenSet[Cell] = frozenset()
    grants: Dict[str, CorridorDirection] = field(default_factory=dict)
    waiting_for: Optional[str] = None
    commit_left: int = 0
    shortest_length: float = 0.0
    planned_length: float = 0.0
    finished_step: Optional[int] = None

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidParameterError(f"agent {self.id}: radius must be positive")

    @property
    def position(self) -> Tuple[float, float]:
        return (self.pose.x, self.pose.y)

    @property
    def active(self) -> bool:
        return self.status is AgentStatus.ACTIVE

    @property
    def at_path_end(self) -> bool:
        return self.path_index >= self.path.last_index

    def remaining_path(self) -> Path:
        return self.path.suffix(self.path_index)

    def replace_path(self, path: Path) -> None:
        """Adopt a path that starts at the current pose."""
        self.path = path
        self.path_index = 0
        self.backing_off = False

    def set_status(self, status: AgentStatus, step: int) -> None:
        """
        Status only leaves ACTIVE, once.

        Raises:
            ValueError: on a transition out of a terminal status
        """
        if status is self.status:
            return
        if self.status.terminal:
            raise ValueError(f"agent {self.id}: cannot go from {self.status.value} to {status.value}")
        self.status = status
        self.finished_step = step
        self.velocity = np.zeros(2)


class World:
    """
    Everything one episode mutates. Lattice graphs and planners are shared by
    agents of equal radius; the reservation table exists only when the
    corridor protocol is enabled.
    """

    def __init__(self, scenario: Scenario, grid_map: GridMap, primitives: PrimitiveSet,
                 agents: Dict[int, AgentState], planners: Dict[float, LatticePlanner],
                 table: Optional[ReservationTable], step_budget: int):
        self.scenario = scenario
        self.params: NavigationParams = scenario.params
        self.grid_map = grid_map
        self.primitives = primitives
        self.agents = agents
        self.planners = planners
        self.table = table
        self.step_budget = step_budget
        self.weights: CongestionWeights = self.params.weights.to_weights()
        self.sample_step = primitives.sample_step
        self.dt = self.sample_step / self.params.nominal_speed
        self.step = 0
        self.collision_events = 0
        self.corridor_violations = 0
        self.sensing_radius = scenario.sensing_range()
        self.deadlock_deltas = {
            agent.id: self.params.deadlock_delta or agent.radius / 2.0 for agent in agents.values()
        }
        for agent in agents.values():
            agent.history = deque([agent.position], maxlen=self.params.deadlock_window + 1)

    @property
    def time(self) -> float:
        return self.step * self.dt

    @property
    def modes(self):
        return self.params.modes

    def planner_for(self, agent: AgentState) -> LatticePlanner:
        return self.planners[agent.radius]

    def graph_for(self, agent: AgentState) -> LatticeGraph:
        return self.planners[agent.radius].graph

    def ordered_agents(self) -> List[AgentState]:
        return [self.agents[agent_id] for agent_id in sorted(self.agents)]

    def active_agents(self) -> List[AgentState]:
        return [agent for agent in self.ordered_agents() if agent.active]

    def present_agents(self) -> List[AgentState]:
        """Agents still in the scene: collided agents are removed."""
        return [agent for agent in self.ordered_agents() if agent.status is not AgentStatus.COLLIDED]

    def snapshot(self) -> Dict[int, Tuple[float, float]]:
        return {agent.id: agent.position for agent in self.present_agents()}

    def plan_leg(self, agent: AgentState, start: Pose, goal: Pose) -> Path:
        """Anytime plan for one leg; the last (best) path of the schedule."""
        planner = self.planner_for(agent)
        query = PlanQuery(start, goal, self.params.initial_schedule[0], self.params.expansion_budget)
        return planner.plan_anytime(query, self.params.initial_schedule, agent.avoided)[-1]

    @classmethod
    def from_scenario(cls, scenario: Scenario, store: Optional[ReservationStore] = None) -> "World":
        """
        Build the lattice, plan every agent's first leg and size the step budget.

        Raises:
            InvalidParameterError: primitive construction failed or waypoint spacing exceeds a radius
            PlanningError: an agent's goal or task is unreachable
        """
        params = scenario.params
        grid_map = scenario.map.to_grid_map()
        res = grid_map.resolution
        min_radius = min(spec.radius for spec in scenario.agents)
        primitives = build_primitives(params.heading_count,
                                      params.turn_radius if params.turn_radius is not None else res,
                                      res, min(res / 2.0, min_radius))
        if primitives.max_hop() > min_radius + 1e-9:
            raise InvalidParameterError(f"waypoint spacing {primitives.max_hop():.3f} exceeds radius {min_radius}")

        planners: Dict[float, LatticePlanner] = {}
        for radius in sorted({spec.radius for spec in scenario.agents}):
            planners[radius] = LatticePlanner(LatticeGraph(grid_map, primitives, radius), params.expansion_budget)

        table = None
        if params.modes.corridors:
            if scenario.corridors:
                corridors = [Corridor(spec.id, tuple(tuple(c) for c in spec.cells), res)
                             for spec in scenario.corridors]
            elif params.auto_corridors:
                corridors = detect_narrow_passages(grid_map, params.corridor_width_threshold)
            else:
                corridors = []
            if corridors:
                table = ReservationTable(corridors, store)

        tasks_by_agent: Dict[int, List[Task]] = {}
        for task in scenario.tasks:
            tasks_by_agent.setdefault(task.agent, []).append(Task(task.task_id, task.goal.to_pose()))

        agents: Dict[int, AgentState] = {}
        for spec in scenario.agents:
            agents[spec.id] = cls._initial_agent(spec, tasks_by_agent.get(spec.id, []), params,
                                                 planners[spec.radius])

        longest = max(agent.planned_length for agent in agents.values())
        if params.step_budget is not None:
            step_budget = params.step_budget
        else:
            step_budget = max(1, int(math.ceil(4.0 * longest / primitives.sample_step)))

        world = cls(scenario, grid_map, primitives, agents, planners, table, step_budget)
        logger.info(f"World '{scenario.name}': {len(agents)} agents, "
                    f"{len(table.corridors) if table else 0} corridors, step budget {step_budget}, "
                    f"dt {world.dt:.3f}s")
        return world

    @staticmethod
    def _initial_agent(spec: AgentSpec, extra_tasks: List[Task], params: NavigationParams,
                       planner: LatticePlanner) -> AgentState:
        start = spec.start.to_pose()
        legs = [Task("goal", spec.goal.to_pose())] + extra_tasks
        try:
            first = planner.plan_anytime(PlanQuery(start, legs[0].goal, params.initial_schedule[0],
                                                   params.expansion_budget),
                                         params.initial_schedule)[-1]
            shortest = 0.0
            planned = first.length
            pose = start
            for index, leg in enumerate(legs):
                optimal = planner.plan(PlanQuery(pose, leg.goal, 1.0, params.expansion_budget))
                shortest += optimal.length
                if index > 0:
                    planned += optimal.length
                pose = optimal.end
        except PlanningError as e:
            logger.error(f"Agent {spec.id}: no initial plan: {e}")
            raise
        logger.info(f"Agent {spec.id}: initial plan {first.length:.2f} m over {len(first.nodes)} nodes, "
                    f"{len(legs)} task(s)")
        return AgentState(spec.id, spec.radius, start, first, legs[0].goal, legs[0].task_id,
                          tasks=deque(legs[1:]), shortest_length=shortest, planned_length=planned)
