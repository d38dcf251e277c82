import pytest

from planning.errors import NotOnPathError
from planning.grid_map import LatticeNode, Pose
from planning.path import Path, suffix_from


@pytest.fixture
def straight(primitives8):
    """Three forward moves east from (0.5, 1.5), three waypoints per move."""
    forward = primitives8.for_heading(0)[0]
    steps = [(LatticeNode(x, 1, 0), forward) for x in (1, 2, 3)]
    return Path.from_steps(LatticeNode(0, 1, 0), Pose(0.5, 1.5, 0.0), steps, 1.0)


def test_from_steps_layout(straight):
    assert len(straight.poses) == 10
    assert straight.node_indices == (0, 3, 6, 9)
    assert straight.length == pytest.approx(3.0)
    assert straight.end.x == pytest.approx(3.5)
    assert straight.cumulative[3] == pytest.approx(1.0)
    assert all(b >= a for a, b in zip(straight.cumulative, straight.cumulative[1:]))


def test_node_index_helpers(straight):
    assert straight.is_node_index(3)
    assert not straight.is_node_index(4)
    assert straight.node_at_index(6) == LatticeNode(2, 1, 0)
    assert straight.node_at_index(5) is None
    assert straight.next_node_index(4) == 6
    assert straight.previous_node_index(4) == 3
    assert straight.next_node_index(10) is None


def test_suffix_restarts_cost(straight):
    tail = straight.suffix(3)
    assert tail.length == pytest.approx(2.0)
    assert tail.cumulative[0] == 0.0
    assert tail.node_indices == (0, 3, 6)
    assert len(tail.primitives) == 2


def test_suffix_from_mid_primitive_has_no_leading_node(straight):
    tail = straight.suffix(4)
    assert tail.node_indices == (2, 5)
    assert not tail.is_node_index(0)
    with pytest.raises(IndexError):
        straight.suffix(10)


def test_prefix_and_concat_rebuild_the_path(straight):
    head = straight.prefix(3)
    assert head.length == pytest.approx(1.0)
    rebuilt = head.concat(straight.suffix(3))
    assert rebuilt.key == straight.key
    assert rebuilt.node_indices == straight.node_indices
    assert rebuilt.length == pytest.approx(straight.length)


def test_concat_requires_touching_ends(straight):
    with pytest.raises(NotOnPathError):
        straight.concat(straight)


def test_index_of_and_suffix_from(straight):
    assert straight.index_of(Pose(1.5, 1.5, 0.0)) == 3
    assert suffix_from(straight, Pose(2.5, 1.5, 0.0)).length == pytest.approx(1.0)
    with pytest.raises(NotOnPathError):
        straight.index_of(Pose(1.5, 3.5, 0.0))


def test_from_poses_uses_polyline_length():
    path = Path.from_poses([Pose(0, 0), Pose(3, 4), Pose(3, 5)])
    assert path.length == pytest.approx(6.0)
    assert path.node_indices == ()


def test_empty_path(open_graph):
    node = LatticeNode(1, 1, 0)
    path = Path.empty(node, open_graph.node_pose(node), 1.0)
    assert path.length == 0.0
    assert path.last_index == 0
