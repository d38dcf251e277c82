from collections import deque

import pytest

from coordination.corridor import CorridorDirection
from planning.grid_map import Pose
from planning.path import Path
from planning.planner import PlanQuery
from scenarios.generator import warehouse_scenario
from scenarios.loader import parse_scenario
from simulation.orchestrator import detect_collisions, detect_deadlock, mode_name, run_episode, step
from simulation.world import AgentState, AgentStatus, World

TASKS = """\
name: errands
map:
  width: 10
  height: 6
  occupied: []
agents:
  - id: 0
    start: {x: 1.5, y: 1.5, theta: E}
    goal: {x: 5.5, y: 1.5}
tasks:
  - {task_id: second, agent: 0, goal: {x: 5.5, y: 4.5}}
  - {task_id: third, agent: 0, goal: {x: 1.5, y: 4.5}}
"""

INSIDE = """\
name: inside_main
map:
  resolution: 1.0
  ascii:
    - ".......#######......."
    - ".......#######......."
    - ".......#######......."
    - ".......#######......."
    - "....................."
    - ".......#######......."
    - ".......#######......."
    - ".......#######......."
    - ".......#######......."
agents:
  - id: 0
    start: {x: 9.5, y: 4.5, theta: E}
    goal: {x: 18.5, y: 1.5}
corridors:
  - id: main
    cells: [[7, 4], [8, 4], [9, 4], [10, 4], [11, 4], [12, 4], [13, 4]]
"""

PASSING = """\
name: passing_parked
map:
  width: 12
  height: 7
  occupied: []
agents:
  - id: 0
    start: {x: 2.5, y: 3.5, theta: E}
    goal: {x: 9.5, y: 3.5}
  - id: 1
    start: {x: 4.5, y: 3.5, theta: E}
    goal: {x: 4.5, y: 3.5}
"""


def agent_at(x: float, y: float = 0.5) -> AgentState:
    path = Path.from_poses([Pose(x, y), Pose(x + 1.0, y)])
    return AgentState(0, 0.4, Pose(x, y), path, Pose(x + 1.0, y))


def cells_visited(result, agent_id):
    return {(int(r.x), int(r.y)) for r in result.trajectory.for_agent(agent_id)}


class TestHarnessChecks:
    def test_detect_collisions(self):
        positions = {0: (0.0, 0.0), 1: (0.8, 0.0), 2: (5.0, 5.0), 3: (5.5, 5.0)}
        radii = {0: 0.4, 1: 0.4, 2: 0.4, 3: 0.1}
        assert detect_collisions(positions, radii) == [(0, 1), (2, 3)]
        assert detect_collisions({0: (0.0, 0.0)}, {0: 0.4}) == []

    def test_detect_deadlock(self):
        agent = agent_at(0.5)
        agent.history = deque([(0.5, 0.5)] * 4)
        assert detect_deadlock(agent, window=3, delta=0.2)
        assert not detect_deadlock(agent, window=5, delta=0.2)
        agent.history.append((0.9, 0.5))
        assert not detect_deadlock(agent, window=3, delta=0.2)
        agent.path_index = agent.path.last_index
        agent.history = deque([(0.5, 0.5)] * 4)
        assert not detect_deadlock(agent, window=3, delta=0.2)

    def test_status_only_leaves_active_once(self):
        agent = agent_at(0.5)
        agent.set_status(AgentStatus.REACHED, 4)
        agent.set_status(AgentStatus.REACHED, 9)
        assert agent.finished_step == 4
        with pytest.raises(ValueError):
            agent.set_status(AgentStatus.COLLIDED, 5)


def test_single_step(corpus):
    world = World.from_scenario(corpus("head_on_open"))
    report = step(world)
    assert report.step == 1 and world.step == 1
    assert report.moved == [0, 1]
    assert world.agents[0].pose.x > 2.5
    assert world.time == pytest.approx(world.dt)


def test_single_agent_follows_its_plan(corpus):
    result = run_episode(corpus("single_agent"))
    assert result.metrics.success_rate == 1.0
    assert result.metrics.reached == 1
    assert result.metrics.length_ratio == pytest.approx(1.0)
    assert result.trajectory.is_contiguous()
    assert result.trajectory.final_records()[0].status == "reached"
    assert result.mode == "full"


def test_task_queue_is_worked_through():
    result = run_episode(parse_scenario(TASKS))
    agent = result.world.agents[0]
    assert agent.status is AgentStatus.REACHED
    assert agent.tasks_completed == 3
    assert result.metrics.tasks_completed == 3
    assert (int(agent.pose.x), int(agent.pose.y)) == (1, 4)


class TestHeadOn:
    def test_full_mode_avoids_collision(self, corpus):
        result = run_episode(corpus("head_on_open"), mode="full")
        assert result.metrics.collided == 0
        assert result.metrics.collision_events == 0
        assert result.collector.summary()["min_separation"] > 0

    def test_baseline_collides(self, corpus):
        result = run_episode(corpus("head_on_open"), mode="baseline")
        assert result.mode == "baseline"
        assert result.metrics.collided == 2
        assert result.metrics.collision_fraction == 1.0
        assert result.metrics.anomalies
        assert any(alert.rule_name == "agent_collision" for alert in result.alerts)
        assert {r.status for r in result.trajectory.final_records().values()} == {"collided"}

    def test_outputs_are_deterministic(self, corpus, tmp_path):
        first = run_episode(corpus("head_on_open")).write(tmp_path / "a")
        second = run_episode(corpus("head_on_open")).write(tmp_path / "b")
        for name in ("trajectory", "metrics", "reservations"):
            assert first[name].read_bytes() == second[name].read_bytes()


def test_passage_without_reservations_deadlocks(corpus):
    result = run_episode(corpus("corridor_deadlock"))
    assert result.mode == "no-corridors"
    assert result.metrics.collided == 0
    assert result.metrics.deadlocked == 2
    assert result.metrics.success_rate == 0.0
    assert result.metrics.deadlock_fraction == 1.0


def test_denied_agent_takes_the_other_corridor(corpus):
    result = run_episode(corpus("two_corridors"))
    events = [(e.agent_id, e.corridor_id, e.decision) for e in result.reservation_events]
    assert events[0] == (0, "upper", "granted_new")
    assert (1, "upper", "denied") in events
    assert (1, "lower", "granted_new") in events
    upper = set(map(tuple, result.world.scenario.corridors[0].cells))
    assert not cells_visited(result, 1) & upper
    assert result.metrics.reached == 2
    assert result.metrics.collided == 0
    assert result.metrics.reservation_denials >= 1


def test_denied_agent_waits_for_single_corridor(corpus):
    result = run_episode(corpus("single_corridor"))
    events = [(e.agent_id, e.decision) for e in result.reservation_events]
    assert (0, "granted_new") in events
    assert (1, "denied") in events
    assert result.metrics.collided == 0
    assert result.metrics.reached == 2
    assert result.metrics.corridor_violations == 0


def test_mode_names(corpus):
    scenario = corpus("head_on_open")
    assert mode_name(scenario.params.modes) == "full"
    assert mode_name(scenario.with_mode("baseline").params.modes) == "baseline"


@pytest.mark.slow
def test_warehouse_has_no_collisions(corpus):
    result = run_episode(corpus("warehouse_env1"))
    assert result.metrics.collided == 0
    assert result.metrics.corridor_violations == 0
    assert result.trajectory.is_contiguous()


def test_second_denial_waits_instead_of_rerouting(corpus):
    world = World.from_scenario(corpus("two_corridors"))
    agent = world.agents[1]
    agent.avoided = frozenset({(0, 0)})
    denied_steps = 0
    for _ in range(400):
        step(world)
        decisions = [(e.agent_id, e.corridor_id, e.decision) for e in world.table.events()]
        if any(d[0] == 1 and d[2] != "denied" for d in decisions):
            break
        if (1, "upper", "denied") in decisions:
            denied_steps += 1
            assert agent.waiting_for == "upper"
            assert world.table.next_traversal(agent.path, agent.path_index).corridor_id == "upper"
    assert denied_steps > 0
    assert (1, "upper", "granted_new") in decisions
    assert all(d[1] == "upper" for d in decisions if d[0] == 1)


def test_denied_inside_corridor_keeps_held_direction():
    world = World.from_scenario(parse_scenario(INSIDE))
    agent = world.agents[0]
    assert world.table.request("main", CorridorDirection.A_TO_B, 0.0, 30.0, now=0.0, agent_id=0).granted
    agent.grants["main"] = CorridorDirection.A_TO_B
    agent.replace_path(world.planner_for(agent).plan(PlanQuery(agent.pose, Pose(2.5, 1.5), 1.0)))
    assert world.table.next_traversal(agent.path, 0).direction is CorridorDirection.B_TO_A

    step(world)
    assert world.table.next_traversal(agent.path, 0).direction is CorridorDirection.A_TO_B
    assert agent.pose.x > 9.5
    assert world.table.events()[-1].decision == "granted_extended"


def test_adopted_path_is_followed_in_the_same_step():
    world = World.from_scenario(parse_scenario(PASSING))
    agent = world.agents[0]
    planned = agent.path.key
    report = step(world)
    assert 0 in report.moved
    assert agent.path.key != planned
    assert agent.path_index == 1
    assert agent.pose == agent.path.poses[1]
    assert min(abs(p.y - 3.5) for p in agent.path.poses if abs(p.x - 4.5) < 0.5) >= 0.8


@pytest.mark.slow
@pytest.mark.parametrize("scenario", [
    pytest.param("corpus", id="corpus-env1"),
    pytest.param(10, id="env1-n10"),
    pytest.param(20, id="env1-n20"),
])
class TestWarehouseAcceptance:
    @pytest.fixture
    def layout(self, corpus, scenario):
        return corpus("warehouse_env1") if scenario == "corpus" else warehouse_scenario("env1", scenario, 4)

    def test_full_mode_reaches_every_goal(self, layout):
        result = run_episode(layout, mode="full")
        assert result.metrics.success_rate == 1.0
        assert result.metrics.deadlocked == 0
        assert result.metrics.collided == 0
        assert result.metrics.corridor_violations == 0
        assert result.metrics.length_ratio <= 1.25

    def test_baseline_mostly_collides(self, layout):
        result = run_episode(layout, mode="baseline")
        assert result.metrics.collision_fraction >= 0.5
