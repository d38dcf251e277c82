import itertools

import numpy as np
import pytest

from coordination.bvc import compute_bvc, compute_cells, contains, neighbors_within, segment_inside


def test_two_agent_cell_is_offset_bisector():
    cell = compute_bvc((0.0, 0.0), 1.0, [(4.0, 0.0)])
    assert len(cell) == 1
    assert contains(cell, (0.0, 0.0))
    assert contains(cell, (1.0, 5.0))
    assert not contains(cell, (1.01, 0.0))
    assert segment_inside(cell, (0.0, 0.0), (0.9, -2.0))
    assert not segment_inside(cell, (0.0, 0.0), (1.5, 0.0))


def test_no_neighbors_is_unconstrained():
    cell = compute_bvc((2.0, 2.0), 0.5, [])
    assert len(cell) == 0
    assert cell.contains((100.0, -100.0))


def test_coincident_neighbor_gives_empty_cell():
    cell = compute_bvc((1.0, 1.0), 0.4, [(1.0, 1.0)])
    assert not cell.contains((1.0, 1.0))
    assert cell.polygon((0.0, 0.0, 5.0, 5.0)).is_empty


def test_radius_must_be_positive():
    with pytest.raises(ValueError):
        compute_bvc((0.0, 0.0), 0.0, [(1.0, 0.0)])


def test_neighbors_within_sorted_and_bounded():
    positions = {3: (0.0, 2.0), 0: (0.0, 0.0), 1: (5.0, 0.0), 2: (1.0, 0.0)}
    assert list(neighbors_within(positions, 0, 2.0)) == [2, 3]


def test_owner_inside_its_cell_when_separated():
    rng = np.random.default_rng(3)
    radius = 0.4
    points = []
    while len(points) < 12:
        p = rng.uniform(0.0, 20.0, size=2)
        if all(np.linalg.norm(p - q) > 2 * radius for q in points):
            points.append(p)
    positions = {i: tuple(p) for i, p in enumerate(points)}
    cells = compute_cells(positions, radius)
    for agent_id, cell in cells.items():
        assert cell.contains(positions[agent_id])


def test_cells_keep_disks_apart():
    positions = {0: (2.0, 2.0), 1: (5.0, 2.5), 2: (3.5, 5.0), 3: (6.0, 6.0)}
    radius = 0.5
    cells = compute_cells(positions, radius)
    bounds = (0.0, 0.0, 10.0, 10.0)
    polygons = {i: cell.polygon(bounds) for i, cell in cells.items()}
    for i, j in itertools.combinations(sorted(polygons), 2):
        assert polygons[i].distance(polygons[j]) >= 2 * radius - 1e-6


def test_contains_many_matches_contains():
    cell = compute_bvc((0.0, 0.0), 0.5, [(3.0, 0.0), (0.0, 3.0)])
    points = np.array([[0.0, 0.0], [1.0, 1.0], [0.9, 0.9], [2.0, 0.0], [-3.0, -3.0]])
    assert cell.contains_many(points).tolist() == [cell.contains(p) for p in points]


def separated_points(rng, count, radius, size=10.0):
    points = []
    while len(points) < count:
        p = rng.uniform(0.0, size, size=2)
        if all(np.linalg.norm(p - q) > 2 * radius for q in points):
            points.append(p)
    return points


def test_points_in_different_cells_keep_disks_apart():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        radius = float(rng.uniform(0.1, 0.8))
        count = int(rng.integers(2, 6))
        positions = {i: tuple(p) for i, p in enumerate(separated_points(rng, count, radius))}
        cells = compute_cells(positions, radius)
        samples = {}
        for agent_id, cell in cells.items():
            candidates = np.asarray(positions[agent_id]) + rng.uniform(-3.0, 3.0, size=(40, 2))
            samples[agent_id] = candidates[cell.contains_many(candidates)]
        for i, j in itertools.combinations(sorted(samples), 2):
            if len(samples[i]) and len(samples[j]):
                gaps = np.linalg.norm(samples[i][:, None, :] - samples[j][None, :, :], axis=2)
                assert gaps.min() >= 2 * radius - 1e-9


def test_membership_matches_distance_definition():
    rng = np.random.default_rng(5)
    owner = np.array([5.0, 5.0])
    others = np.array([p for p in separated_points(rng, 7, 0.5) if np.linalg.norm(p - owner) > 1.0])
    radius = 0.5
    cell = compute_bvc(owner, radius, others)
    points = rng.uniform(-2.0, 12.0, size=(100_000, 2))
    to_owner = np.sum((points - owner) ** 2, axis=1)
    to_others = np.sum((points[:, None, :] - others[None, :, :]) ** 2, axis=2)
    slack = to_others - to_owner[:, None] - 2 * radius * np.linalg.norm(others - owner, axis=1)[None, :]
    clear = np.all(np.abs(slack) > 1e-7, axis=1)
    expected = np.all(slack >= 0.0, axis=1)
    assert np.array_equal(cell.contains_many(points)[clear], expected[clear])


def test_two_agent_cells_mirror_each_other():
    rng = np.random.default_rng(8)
    for _ in range(50):
        a, b = separated_points(rng, 2, 0.4)
        first, second = compute_bvc(a, 0.4, [b]), compute_bvc(b, 0.4, [a])
        points = rng.uniform(-2.0, 12.0, size=(200, 2))
        mirrored = (a + b)[None, :] - points
        assert np.array_equal(first.contains_many(points), second.contains_many(mirrored))


def test_cells_shrink_with_more_neighbors_and_larger_buffer():
    rng = np.random.default_rng(9)
    for _ in range(50):
        owner, *others = separated_points(rng, 5, 0.4)
        points = rng.uniform(-2.0, 12.0, size=(500, 2))
        fewer = compute_bvc(owner, 0.4, others[:2]).contains_many(points)
        more = compute_bvc(owner, 0.4, others).contains_many(points)
        wider = compute_bvc(owner, 0.6, others).contains_many(points)
        assert not np.any(more & ~fewer)
        assert not np.any(wider & ~more)
