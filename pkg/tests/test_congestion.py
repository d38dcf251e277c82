import numpy as np
import pytest

from coordination.congestion import (
    CongestionWeights,
    NeighborSnapshot,
    ResolutionRequest,
    candidate_paths,
    collision_cost,
    congestion_terms,
    conflict_resolution,
    crowding_cost,
    goal_cost,
    occupied_cells,
    select_candidate,
)
from planning.errors import InvalidParameterError
from planning.grid_map import Pose
from planning.path import Path
from planning.planner import PlanQuery


def line(x0: float, x1: float, step: float = 0.5, y: float = 0.0) -> Path:
    count = int(round((x1 - x0) / step))
    return Path.from_poses([Pose(x0 + k * step, y, 0.0) for k in range(count + 1)])


class TestTerms:
    def test_stationary_neighbor_on_path(self):
        neighbors = NeighborSnapshot.from_lists([(2.0, 0.0), (0.0, 10.0)])
        assert collision_cost(line(0, 5), neighbors, 1.0, 0.4) == 1.0

    def test_moving_neighbor_meets_agent(self):
        oncoming = NeighborSnapshot.from_lists([(4.0, 0.0)], velocities=[(-1.0, 0.0)])
        assert collision_cost(line(0, 5), oncoming, 1.0, 0.4) == 1.0
        receding = NeighborSnapshot.from_lists([(4.0, 0.0)], velocities=[(2.0, 0.0)])
        assert collision_cost(line(0, 5), receding, 1.0, 0.4) == 0.0

    def test_horizon_limits_lookahead(self):
        neighbors = NeighborSnapshot.from_lists([(9.0, 0.0)])
        assert collision_cost(line(0, 10), neighbors, 1.0, 0.4, horizon_steps=5) == 0.0

    def test_goal_term_is_excess_over_shortest(self):
        short, long_ = line(0, 3), line(0, 5)
        assert goal_cost(short, [short, long_]) == 0.0
        assert goal_cost(long_, [short, long_]) == pytest.approx(2.0)

    def test_crowding_uses_control_period_at_time_zero(self):
        here = Path.from_poses([Pose(0.0, 0.0)])
        near = NeighborSnapshot.from_lists([(1.0, 0.0)])
        far = NeighborSnapshot.from_lists([(3.0, 0.0)])
        assert crowding_cost(here, near, 0.4, 1.0, control_period=0.1) == pytest.approx(10.0)
        assert crowding_cost(here, far, 0.4, 1.0) == 0.0

    def test_no_neighbors_costs_nothing(self):
        terms = congestion_terms(line(0, 2), [line(0, 2)], NeighborSnapshot(), CongestionWeights(), 0.4, 1.0)
        assert (terms.collision, terms.goal, terms.crowding) == (0.0, 0.0, 0.0)

    def test_weights_validated(self):
        with pytest.raises(InvalidParameterError):
            CongestionWeights(k_c=-1.0)
        with pytest.raises(InvalidParameterError):
            NeighborSnapshot.from_lists([(0.0, 0.0)], radii=[0.0])
        with pytest.raises(InvalidParameterError):
            collision_cost(line(0, 1), NeighborSnapshot.from_lists([(0.0, 0.0)]), 0.0, 0.4)


class TestSelection:
    def test_collision_outweighs_length(self):
        blocked = line(0, 4)
        detour = line(0, 6, y=3.0)
        neighbors = NeighborSnapshot.from_lists([(2.0, 0.0)])
        index, scores = select_candidate([blocked, detour], neighbors, CongestionWeights(), 0.4, 1.0)
        assert index == 1
        assert scores[0] > scores[1]

    def test_ties_prefer_shorter_then_lower_index(self):
        a, b = line(0, 3), line(0, 2)
        index, _ = select_candidate([a, b], NeighborSnapshot(), CongestionWeights(k_g=0.0), 0.4, 1.0)
        assert index == 1
        index, _ = select_candidate([a, line(0, 3)], NeighborSnapshot(), CongestionWeights(), 0.4, 1.0)
        assert index == 0


class TestResolution:
    def test_candidates_share_start_and_goal(self, open_graph, open_planner):
        start, goal = Pose(2.5, 4.5, 0.0), Pose(7.5, 4.5)
        current = open_planner.plan(PlanQuery(start, goal, 1.0))
        candidates = candidate_paths(start, current, open_graph, open_planner, goal)
        assert candidates[0] is current
        assert 1 < len(candidates) <= 1 + len(open_graph.successors(open_graph.node_at(start)))
        assert len({c.key for c in candidates}) == len(candidates)
        for candidate in candidates:
            assert (candidate.start.x, candidate.start.y) == (2.5, 4.5)
            assert open_graph.grid_map.cell_of(candidate.end.x, candidate.end.y) == (7, 4)

    def test_keeps_current_path_without_neighbors(self, open_graph, open_planner):
        start, goal = Pose(2.5, 4.5, 0.0), Pose(7.5, 4.5)
        current = open_planner.plan(PlanQuery(start, goal, 1.0))
        request = ResolutionRequest(start, current, goal, 0.4)
        chosen = conflict_resolution(request, open_graph, open_planner, NeighborSnapshot(),
                                     CongestionWeights(), 1.0)
        assert chosen.key == current.key

    def test_chosen_candidate_is_the_argmin(self, open_graph, open_planner):
        start, goal = Pose(2.5, 4.5, 0.0), Pose(7.5, 4.5)
        current = open_planner.plan(PlanQuery(start, goal, 1.0))
        neighbors = NeighborSnapshot.from_lists([(4.5, 4.5)])
        request = ResolutionRequest(start, current, goal, 0.4)
        weights = CongestionWeights()
        chosen = conflict_resolution(request, open_graph, open_planner, neighbors, weights, 1.0)
        candidates = candidate_paths(start, current, open_graph, open_planner, goal)
        _, scores = select_candidate(candidates, neighbors, weights, 0.4, 1.0)
        chosen_score = scores[[c.key for c in candidates].index(chosen.key)]
        assert chosen_score == pytest.approx(min(scores))
        assert chosen_score < scores[0]

    def test_off_lattice_pose_keeps_path(self, open_graph, open_planner):
        current = line(2.5, 7.5, y=4.5)
        request = ResolutionRequest(Pose(2.7, 4.5, 0.0), current, Pose(7.5, 4.5), 0.4)
        chosen = conflict_resolution(request, open_graph, open_planner,
                                     NeighborSnapshot.from_lists([(4.5, 4.5)]), CongestionWeights(), 1.0)
        assert chosen is current

    def test_candidate_tails_route_around_avoided_cells(self, open_graph, open_planner):
        start, goal = Pose(2.5, 4.5, 0.0), Pose(7.5, 4.5)
        current = open_planner.plan(PlanQuery(start, goal, 1.0))
        candidates = candidate_paths(start, current, open_graph, open_planner, goal, avoid={(5, 4)})
        assert len(candidates) > 1
        for candidate in candidates[1:]:
            gap = np.linalg.norm(candidate.positions - np.array([5.5, 4.5]), axis=1)
            assert gap.min() >= 0.8

    def test_avoided_goal_falls_back_to_static_map(self, open_graph, open_planner):
        start, goal = Pose(2.5, 4.5, 0.0), Pose(7.5, 4.5)
        current = open_planner.plan(PlanQuery(start, goal, 1.0))
        candidates = candidate_paths(start, current, open_graph, open_planner, goal, avoid={(7, 4)})
        assert len(candidates) > 1
        for candidate in candidates:
            assert open_graph.grid_map.cell_of(candidate.end.x, candidate.end.y) == (7, 4)

    def test_switch_margin_keeps_current_path(self, open_graph, open_planner):
        start, goal = Pose(2.5, 4.5, 0.0), Pose(7.5, 4.5)
        current = open_planner.plan(PlanQuery(start, goal, 1.0))
        request = ResolutionRequest(start, current, goal, 0.4)
        neighbors = NeighborSnapshot.from_lists([(4.5, 4.5)])
        switched = conflict_resolution(request, open_graph, open_planner, neighbors, CongestionWeights(), 1.0)
        assert switched.key != current.key
        kept = conflict_resolution(request, open_graph, open_planner, neighbors, CongestionWeights(), 1.0,
                                   switch_margin=1e6)
        assert kept is current

    def test_rejected_candidates_are_not_adopted(self, open_graph, open_planner):
        start, goal = Pose(2.5, 4.5, 0.0), Pose(7.5, 4.5)
        current = open_planner.plan(PlanQuery(start, goal, 1.0))
        request = ResolutionRequest(start, current, goal, 0.4)
        neighbors = NeighborSnapshot.from_lists([(4.5, 4.5)])
        chosen = conflict_resolution(request, open_graph, open_planner, neighbors, CongestionWeights(), 1.0,
                                     admissible=lambda path: False)
        assert chosen is current


@pytest.mark.parametrize("position, expected", [
    ((2.5, 2.5), {(2, 2)}),
    ((3.0, 2.5), {(2, 2), (3, 2)}),
    ((3.0, 3.0), {(2, 2), (3, 2), (2, 3), (3, 3)}),
])
def test_occupied_cells(position, expected):
    assert occupied_cells(NeighborSnapshot.from_lists([position])) == expected
    assert occupied_cells(NeighborSnapshot()) == frozenset()


def test_snapshot_arrays_are_aligned():
    snapshot = NeighborSnapshot.from_lists([(1.0, 2.0), (3.0, 4.0)], radii=[0.3, 0.5])
    assert len(snapshot) == 2
    assert np.array_equal(snapshot.velocities, np.zeros((2, 2)))


@pytest.mark.parametrize("factor", [0.1, 3.0, 10.0])
def test_selection_ignores_uniform_weight_scaling(factor):
    rng = np.random.default_rng(31)
    weights = CongestionWeights()
    for _ in range(200):
        candidates = [line(0.0, float(rng.uniform(2.0, 8.0)), y=float(rng.uniform(-2.0, 2.0)))
                      for _ in range(int(rng.integers(2, 7)))]
        count = int(rng.integers(0, 5))
        neighbors = NeighborSnapshot.from_lists(rng.uniform(-1.0, 8.0, size=(count, 2)),
                                                rng.uniform(-1.0, 1.0, size=(count, 2)))
        index, _ = select_candidate(candidates, neighbors, weights, 0.4, 1.0)
        scaled, _ = select_candidate(candidates, neighbors, weights.scaled(factor), 0.4, 1.0)
        assert scaled == index
