#!/usr/bin/env python3
"""
Lockstep episode execution.

Every step, each active agent (ascending id) decides against the position
snapshot taken at the start of the step:

1. corridor gating: trigger check, reservation request, one detour per
   leg around a denied corridor, otherwise a standoff wait
2. conflict resolution when the agent stands on a lattice node and is not
   waiting; inside or committed to a corridor only candidates keeping
   that traversal are considered, and an adopted path is gated again
3. the next waypoint of its path, held while waiting or when entering a
   corridor without a grant
4. the buffered Voronoi cell gate on the segment to that waypoint

All decisions are then committed together and the harness checks
collisions (end positions and segment midpoints), goal arrivals and
progress.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from coordination.bvc import compute_bvc, neighbors_within
from coordination.congestion import (
    NeighborSnapshot,
    ResolutionRequest,
    conflict_resolution,
    congestion_terms,
    occupied_cells,
)
from coordination.corridor import (
    Corridor,
    CorridorDirection,
    CorridorRequest,
    ReservationEvent,
    on_denied,
    standoff_index,
    trigger_check,
)
from database.reservation_store import ReservationStore
from monitoring.alert_system import Alert, AlertSystem, SimulationEvent
from monitoring.config import get_monitoring_config
from monitoring.metrics_collector import Metrics, MetricsCollector, StepSample, compute_metrics, min_clearance
from planning.errors import PlanningError
from planning.path import Path as LatticePath
from planning.planner import PlanQuery
from scenarios.model import MODES, ModeFlags, Scenario
from scenarios.trajectory_log import (
    TrajectoryLog,
    TrajectoryRecord,
    write_metrics_json,
    write_reservation_csv,
    write_trajectory_csv,
)
from simulation.world import AgentState, AgentStatus, World

logger = logging.getLogger(__name__)

Point2 = Tuple[float, float]


@dataclass
class Decision:
    agent_id: int
    target: int
    reason: str   # move, backoff, bvc, wait, corridor


@dataclass
class StepReport:
    step: int
    moved: List[int] = field(default_factory=list)
    held: List[int] = field(default_factory=list)
    collisions: List[Tuple[int, int]] = field(default_factory=list)
    reached: List[int] = field(default_factory=list)
    events: List[SimulationEvent] = field(default_factory=list)


@dataclass
class EpisodeResult:
    world: World
    trajectory: TrajectoryLog
    metrics: Metrics
    reservation_events: List[ReservationEvent]
    alerts: List[Alert]
    collector: MetricsCollector
    mode: str

    def write(self, out_dir) -> Dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return {
            "trajectory": write_trajectory_csv(self.trajectory, out / "trajectory.csv"),
            "metrics": write_metrics_json(self.metrics, out / "metrics.json"),
            "reservations": write_reservation_csv(self.reservation_events, out / "reservations.csv"),
        }


def mode_name(flags: ModeFlags) -> str:
    for name, preset in MODES.items():
        if preset.model_dump() == flags.model_dump():
            return name
    return "custom"


def detect_collisions(positions: Mapping[int, Point2], radii: Mapping[int, float]) -> List[Tuple[int, int]]:
    """Unordered pairs (i < j) with ||p_i - p_j|| <= R_i + R_j."""
    ids = sorted(positions)
    if len(ids) < 2:
        return []
    points = np.array([positions[i] for i in ids], dtype=float)
    radius = np.array([radii[i] for i in ids], dtype=float)
    distance = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    touching = distance <= radius[:, None] + radius[None, :]
    rows, cols = np.nonzero(np.triu(touching, k=1))
    return [(ids[r], ids[c]) for r, c in zip(rows.tolist(), cols.tolist())]


def detect_deadlock(agent: AgentState, window: int = 50, delta: Optional[float] = None) -> bool:
    """Net displacement over the last ``window`` steps below ``delta`` (default R/2), away from the goal."""
    if not agent.active or agent.at_path_end:
        return False
    delta = agent.radius / 2.0 if delta is None else delta
    history = agent.history
    if len(history) < window + 1:
        return False
    x0, y0 = history[-window - 1]
    x1, y1 = history[-1]
    return math.hypot(x1 - x0, y1 - y0) < delta


def _neighbor_snapshot(neighbors: Mapping[int, Point2], velocities: Mapping[int, np.ndarray],
                       radii: Mapping[int, float]) -> NeighborSnapshot:
    ids = sorted(neighbors)
    return NeighborSnapshot(np.array([neighbors[i] for i in ids], dtype=float).reshape(len(ids), 2),
                            np.array([velocities[i] for i in ids], dtype=float).reshape(len(ids), 2),
                            np.array([radii[i] for i in ids], dtype=float))


class EpisodeStepper:
    """Decides and commits one lockstep at a time for a world."""

    def __init__(self, world: World):
        self.world = world
        self.params = world.params
        self.stall_steps = get_monitoring_config().stall_warning_steps

    def step(self) -> StepReport:
        world = self.world
        snapshot = world.snapshot()
        velocities = {a.id: a.velocity.copy() for a in world.present_agents()}
        radii = {a.id: a.radius for a in world.present_agents()}
        report = StepReport(world.step + 1)

        decisions = {}
        for agent in world.active_agents():
            decisions[agent.id] = self._decide(agent, snapshot, velocities, radii, report)
        self._commit(decisions, snapshot, radii, report)
        return report

    # decisions

    def _decide(self, agent: AgentState, snapshot: Dict[int, Point2], velocities: Dict[int, np.ndarray],
                radii: Dict[int, float], report: StepReport) -> Decision:
        world = self.world
        limit = self._corridor_gate(agent, report) if world.table is not None else None

        # Resolution runs before the waypoint is chosen so this step's move
        # already follows the adopted path, which goes through the gate again.
        if (world.modes.congestion and agent.waiting_for is None and not agent.backing_off
                and agent.path.is_node_index(agent.path_index)):
            if self._resolve_conflicts(agent, snapshot, velocities, radii) and world.table is not None:
                limit = self._corridor_gate(agent, report)

        if agent.at_path_end:
            return Decision(agent.id, agent.path_index, "wait")
        target = agent.path_index - 1 if agent.backing_off else agent.path_index + 1
        if limit is not None and target > limit:
            agent.hold_steps = 0
            return Decision(agent.id, agent.path_index, "wait")
        if world.table is not None and not self._may_enter(agent, target):
            agent.hold_steps = 0
            return Decision(agent.id, agent.path_index, "corridor")
        if world.modes.bvc and not self._inside_cell(agent, target, snapshot, radii):
            return self._held_by_cell(agent, report)
        return Decision(agent.id, target, "backoff" if agent.backing_off else "move")

    def _held_by_cell(self, agent: AgentState, report: StepReport) -> Decision:
        agent.hold_steps += 1
        backoff = self.params.hold_backoff_steps
        if (backoff and agent.hold_steps >= backoff and not agent.backing_off
                and not agent.path.is_node_index(agent.path_index)
                and agent.path.previous_node_index(agent.path_index) is not None):
            agent.backing_off = True
            logger.debug(f"Agent {agent.id}: backing off toward node {agent.path.previous_node_index(agent.path_index)}")
        if self.stall_steps and agent.hold_steps % self.stall_steps == 0:
            report.events.append(SimulationEvent("hold_outside_cell", report.step, report.step * self.world.dt,
                                                 (agent.id,), {"holds": agent.hold_steps}))
        return Decision(agent.id, agent.path_index, "bvc")

    def _resolve_conflicts(self, agent: AgentState, snapshot: Dict[int, Point2],
                           velocities: Dict[int, np.ndarray], radii: Dict[int, float]) -> bool:
        """
        Re-run path selection at a node. A path free of predicted collisions
        and crowding is kept without building candidates, and for
        ``commit_nodes`` nodes after a switch only a predicted collision
        reopens the choice.
        """
        world, params = self.world, self.params
        neighbors = neighbors_within(snapshot, agent.id, world.sensing_radius)
        if not neighbors:
            return False
        nearby = _neighbor_snapshot(neighbors, velocities, radii)
        current = agent.remaining_path()
        terms = congestion_terms(current, [current], nearby, world.weights, agent.radius, params.nominal_speed,
                                 params.control_period)
        settling = agent.commit_left > 0
        agent.commit_left = max(agent.commit_left - 1, 0)
        if terms.collision == 0 and (settling or terms.crowding == 0):
            return False

        request = ResolutionRequest(agent.pose, current, agent.goal, agent.radius, agent.avoided,
                                    occupied_cells(nearby, world.grid_map.resolution))
        chosen = conflict_resolution(request, world.graph_for(agent), world.planner_for(agent), nearby,
                                     world.weights, params.nominal_speed, params.control_period,
                                     params.epsilon, agent.id, params.switch_margin,
                                     self._traversal_filter(agent))
        if chosen is current or chosen.key == current.key:
            return False
        agent.replace_path(chosen)
        agent.commit_left = params.commit_nodes
        return True

    def _committed_traversal(self, agent: AgentState) -> Optional[Tuple[str, CorridorDirection]]:
        """Corridor and direction the agent is inside of, or holds a live grant for within trigger range."""
        world, table = self.world, self.world.table
        if table is None:
            return None
        corridor = table.corridor_at(world.grid_map.cell_of(agent.pose.x, agent.pose.y))
        if corridor is not None:
            direction = agent.grants.get(corridor.id)
            return (corridor.id, direction) if direction is not None else None
        traversal = table.next_traversal(agent.path, agent.path_index)
        if traversal is None or traversal.distance > self.params.trigger_radius:
            return None
        if agent.grants.get(traversal.corridor_id) is not traversal.direction:
            return None
        if not table.holds(traversal.corridor_id, traversal.direction, world.time):
            return None
        return traversal.corridor_id, traversal.direction

    def _traversal_filter(self, agent: AgentState) -> Optional[Callable[[LatticePath], bool]]:
        committed = self._committed_traversal(agent)
        if committed is None:
            return None
        table = self.world.table

        def same_traversal(path: LatticePath) -> bool:
            traversal = table.next_traversal(path, 0)
            return traversal is not None and (traversal.corridor_id, traversal.direction) == committed

        return same_traversal

    def _corridor_gate(self, agent: AgentState, report: StepReport, depth: int = 0) -> Optional[int]:
        """Highest waypoint index the agent may reach this step, or None when unconstrained."""
        world, params, table = self.world, self.params, self.world.table
        now = world.time
        request = trigger_check(agent.path, agent.path_index, table, params.trigger_radius, now,
                                params.nominal_speed)
        if request is None:
            agent.waiting_for = None
            return None
        decision = table.request(request.corridor_id, request.direction, request.eta,
                                 request.traverse_duration + world.dt, now, agent.id)
        if decision.granted:
            agent.grants[request.corridor_id] = request.direction
            agent.waiting_for = None
            return None

        report.events.append(SimulationEvent("reservation_denied", report.step, now, (agent.id,),
                                             {"corridor_id": request.corridor_id,
                                              "direction": request.direction.value}))
        if request.distance <= 0:
            return self._hold_inside(agent, request, report, depth)
        # One detour per leg; a second denial waits instead of bouncing between corridors.
        if agent.waiting_for != request.corridor_id and not agent.avoided and depth == 0:
            outcome = on_denied(agent.path, agent.path_index, agent.goal, table.corridor(request.corridor_id),
                                world.planner_for(agent), agent.avoided, params.epsilon)
            if not outcome.waiting:
                agent.replace_path(outcome.path)
                agent.avoided = outcome.blocked
                return self._corridor_gate(agent, report, depth + 1)
        if agent.waiting_for != request.corridor_id:
            logger.info(f"Agent {agent.id}: waiting for corridor {request.corridor_id} at t={now:.2f}")
        agent.waiting_for = request.corridor_id
        agent.history.clear()
        agent.history.append(agent.position)
        traversal = table.next_traversal(agent.path, agent.path_index)
        return standoff_index(agent.path, agent.path_index, traversal, params.standoff_distance)

    def _hold_inside(self, agent: AgentState, request: CorridorRequest, report: StepReport,
                     depth: int) -> Optional[int]:
        """
        Denied while already inside: go back to a path that keeps the held
        direction, or stay put when there is none.
        """
        held = agent.grants.get(request.corridor_id)
        if held is not None and held is not request.direction and depth == 0:
            path = self._path_in_direction(agent, self.world.table.corridor(request.corridor_id), held)
            if path is not None:
                logger.info(f"Agent {agent.id}: keeping direction {held.value} inside {request.corridor_id}")
                agent.replace_path(path)
                return self._corridor_gate(agent, report, depth + 1)
        return agent.path_index

    def _path_in_direction(self, agent: AgentState, corridor: Corridor,
                           direction: CorridorDirection) -> Optional[LatticePath]:
        """Plan from the next node with the corridor cells behind the agent blocked."""
        world, table = self.world, self.world.table
        anchor = agent.path.next_node_index(agent.path_index)
        if anchor is None:
            return None
        start = agent.path.poses[anchor]
        cell = world.grid_map.cell_of(start.x, start.y)
        if not corridor.contains(cell):
            return None
        index = corridor.index_of(cell)
        behind = corridor.cells[:index] if direction is CorridorDirection.A_TO_B else corridor.cells[index + 1:]
        lead = agent.path.suffix(agent.path_index).prefix(anchor - agent.path_index)
        try:
            tail = world.planner_for(agent).plan(
                PlanQuery(start, agent.goal, self.params.epsilon, world.planner_for(agent).expansion_budget),
                agent.avoided | frozenset(behind))
        except PlanningError as e:
            logger.debug(f"Agent {agent.id}: no path keeping {direction.value} in {corridor.id}: {e}")
            return None
        path = lead.concat(tail)
        traversal = table.next_traversal(path, 0)
        if traversal is None or traversal.corridor_id != corridor.id or traversal.direction is not direction:
            return None
        return path

    def _may_enter(self, agent: AgentState, target: int) -> bool:
        world, table = self.world, self.world.table
        pose = agent.path.poses[target]
        corridor = table.corridor_at(world.grid_map.cell_of(pose.x, pose.y))
        if corridor is None or corridor.contains(world.grid_map.cell_of(agent.pose.x, agent.pose.y)):
            return True
        direction = agent.grants.get(corridor.id)
        return direction is not None and table.holds(corridor.id, direction, world.time)

    def _inside_cell(self, agent: AgentState, target: int, snapshot: Dict[int, Point2],
                     radii: Dict[int, float]) -> bool:
        neighbors = neighbors_within(snapshot, agent.id, self.world.sensing_radius)
        if not neighbors:
            return True
        buffer = max([agent.radius] + [radii[i] for i in neighbors]) + self.params.bvc_margin
        cell = compute_bvc(agent.position, buffer, [neighbors[i] for i in sorted(neighbors)])
        return cell.segment_inside(agent.position, agent.path.poses[target].position)

    # commit

    def _commit(self, decisions: Dict[int, Decision], snapshot: Dict[int, Point2], radii: Dict[int, float],
                report: StepReport) -> None:
        world = self.world
        for agent_id in sorted(decisions):
            agent = world.agents[agent_id]
            decision = decisions[agent_id]
            before = agent.position
            if decision.target != agent.path_index:
                agent.traveled += abs(agent.path.cumulative[decision.target] - agent.path.cumulative[agent.path_index])
                agent.path_index = decision.target
                agent.pose = agent.path.poses[decision.target]
                if decision.reason == "move":
                    agent.hold_steps = 0
                if agent.backing_off and agent.path.is_node_index(agent.path_index):
                    agent.backing_off = False
                    agent.hold_steps = 0
                report.moved.append(agent_id)
            else:
                report.held.append(agent_id)
            agent.velocity = (np.asarray(agent.position) - np.asarray(before)) / world.dt
        world.step += 1

        present = world.present_agents()
        ends = {a.id: a.position for a in present}
        midpoints = {a.id: ((snapshot[a.id][0] + a.position[0]) / 2.0, (snapshot[a.id][1] + a.position[1]) / 2.0)
                     for a in present}
        pairs = sorted(set(detect_collisions(ends, radii)) | set(detect_collisions(midpoints, radii)))
        for i, j in pairs:
            world.collision_events += 1
            report.collisions.append((i, j))
            report.events.append(SimulationEvent("collision", world.step, world.time, (i, j)))
            logger.warning(f"Step {world.step}: agents {i} and {j} collided")
        for i, j in pairs:
            for agent_id in (i, j):
                if world.agents[agent_id].active:
                    world.agents[agent_id].set_status(AgentStatus.COLLIDED, world.step)

        for agent in world.active_agents():
            if agent.at_path_end:
                finish_leg(world, agent)
                if agent.status is AgentStatus.REACHED:
                    report.reached.append(agent.id)
        for agent in world.active_agents():
            if agent.waiting_for is None:
                agent.history.append(agent.position)

        if world.table is not None:
            self._audit_corridors(report)

    def _audit_corridors(self, report: StepReport) -> None:
        world = self.world
        for corridor in world.table.corridors.values():
            directions: Dict[CorridorDirection, List[int]] = {}
            for agent in world.active_agents():
                if not corridor.contains(world.grid_map.cell_of(agent.pose.x, agent.pose.y)):
                    continue
                direction = agent.grants.get(corridor.id)
                if direction is not None:
                    directions.setdefault(direction, []).append(agent.id)
            if CorridorDirection.A_TO_B in directions and CorridorDirection.B_TO_A in directions:
                world.corridor_violations += 1
                ids = tuple(sorted(directions[CorridorDirection.A_TO_B] + directions[CorridorDirection.B_TO_A]))
                report.events.append(SimulationEvent("corridor_conflict", world.step, world.time, ids,
                                                     {"corridor_id": corridor.id}))


def finish_leg(world: World, agent: AgentState) -> None:
    """Complete the agent's current task and start the next one, or mark it reached."""
    agent.tasks_completed += 1
    logger.info(f"Agent {agent.id}: task {agent.task_id} done at step {world.step}")
    while agent.tasks:
        task = agent.tasks.popleft()
        agent.avoided = frozenset()
        try:
            path = world.plan_leg(agent, agent.pose, task.goal)
        except PlanningError as e:
            logger.warning(f"Agent {agent.id}: task {task.task_id} unreachable: {e}")
            agent.set_status(AgentStatus.DEADLOCKED, world.step)
            return
        agent.goal = task.goal
        agent.task_id = task.task_id
        agent.replace_path(path)
        if not agent.at_path_end:
            return
        agent.tasks_completed += 1
    agent.set_status(AgentStatus.REACHED, world.step)


def step(world: World) -> StepReport:
    """Advance ``world`` by one lockstep."""
    return EpisodeStepper(world).step()


def run_episode(scenario: Scenario, mode: Optional[str] = None, seed: Optional[int] = None,
                store: Optional[ReservationStore] = None,
                alert_system: Optional[AlertSystem] = None) -> EpisodeResult:
    """
    Run one episode to completion.

    Args:
        scenario: validated scenario
        mode: optional override of the scenario mode flags (full, baseline, no-corridors)
        seed: optional override of the scenario seed
        store: reservation store backend, in-memory when omitted
        alert_system: receives anomaly events; a fresh one is created when omitted

    Returns:
        EpisodeResult with trajectory, metrics, reservation events and alerts
    """
    if mode is not None:
        scenario = scenario.with_mode(mode)
    if seed is not None:
        scenario = scenario.with_seed(seed)
    params = scenario.params
    name = mode_name(params.modes)
    alert_system = alert_system or AlertSystem()
    collector = MetricsCollector()
    progress_every = get_monitoring_config().progress_every_steps

    world = World.from_scenario(scenario, store)
    stepper = EpisodeStepper(world)
    for agent in world.active_agents():
        if agent.at_path_end:
            finish_leg(world, agent)
    trajectory = TrajectoryLog()
    trajectory.record_agents(0, world.ordered_agents())
    logger.info(f"Episode '{scenario.name}' started in {name} mode (seed {params.seed})")

    stalled = set()
    try:
        while world.active_agents() and world.step < world.step_budget:
            recorded = world.active_agents()
            report = stepper.step()
            trajectory.record_agents(world.step, recorded)

            active = world.active_agents()
            stuck = {a.id for a in active
                     if detect_deadlock(a, params.deadlock_window, world.deadlock_deltas[a.id])}
            for agent_id in sorted(stuck - stalled):
                report.events.append(SimulationEvent("deadlock", world.step, world.time, (agent_id,),
                                                     {"window": params.deadlock_window}))
            stalled = stuck
            for event in report.events:
                alert_system.process_event(event)

            positions = world.snapshot()
            statuses = [a.status for a in world.ordered_agents()]
            collector.record(StepSample(world.step, world.time, len(active), statuses.count(AgentStatus.REACHED),
                                        statuses.count(AgentStatus.COLLIDED), len(stuck),
                                        len(report.moved), len(report.held),
                                        min_clearance(positions, {i: world.agents[i].radius for i in positions})))
            if progress_every and world.step % progress_every == 0:
                logger.info(f"Step {world.step}/{world.step_budget}: {len(active)} active")
            if active and len(stuck) == len(active):
                logger.warning(f"Step {world.step}: every active agent is stuck, ending episode")
                break
    except Exception as e:
        logger.error(f"Episode '{scenario.name}' failed at step {world.step}: {e}")
        raise

    for agent in world.active_agents():
        agent.set_status(AgentStatus.DEADLOCKED, world.step)
        _mark_final(trajectory, agent)
        if agent.id not in stalled:
            alert_system.process_event(SimulationEvent("deadlock", world.step, world.time, (agent.id,),
                                                       {"window": params.deadlock_window}))

    metrics = compute_metrics(world, name)
    events = world.table.events() if world.table is not None else []
    logger.info(f"Episode '{scenario.name}' finished after {world.step} steps: SR={metrics.success_rate:.3f} "
                f"(reached {metrics.reached}, collided {metrics.collided}, deadlocked {metrics.deadlocked})")
    return EpisodeResult(world, trajectory, metrics, events, list(alert_system.alert_history), collector, name)


def _mark_final(trajectory: TrajectoryLog, agent: AgentState) -> None:
    """Rewrite the agent's last record with its terminal status."""
    for index in range(len(trajectory.records) - 1, -1, -1):
        record = trajectory.records[index]
        if record.agent_id == agent.id:
            trajectory.records[index] = TrajectoryRecord(record.step, record.agent_id, record.x, record.y,
                                                         record.theta, agent.status.value)
            return
