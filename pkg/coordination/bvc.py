#!/usr/bin/env python3
"""
Buffered Voronoi cells.

Agent i's cell is the set of points p with n_ij . p <= c_ij for every
neighbor j, where n_ij is the unit vector from p_i to p_j and
c_ij = n_ij . (p_i + p_j) / 2 - R. Equivalently
||p - p_j||^2 - ||p - p_i||^2 >= 2 R ||p_i - p_j||.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import Polygon, box

Point2 = Tuple[float, float]


@dataclass(eq=False)
class BufferedVoronoiCell:
    owner: np.ndarray
    buffer: float
    normals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return int(self.offsets.shape[0])

    def contains(self, p: Sequence[float]) -> bool:
        """Boundary-inclusive membership test."""
        if len(self) == 0:
            return True
        return bool(np.all(self.normals @ np.asarray(p, dtype=float) <= self.offsets))

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if len(self) == 0:
            return np.ones(points.shape[0], dtype=bool)
        return np.all(points @ self.normals.T <= self.offsets, axis=1)

    def segment_inside(self, a: Sequence[float], b: Sequence[float]) -> bool:
        """Both endpoints inside; the cell is convex so the whole segment is."""
        return self.contains(a) and self.contains(b)

    def polygon(self, bounds: Tuple[float, float, float, float]) -> Polygon:
        """Cell clipped to ``(min_x, min_y, max_x, max_y)``; empty when infeasible."""
        region = box(*bounds)
        span = 4.0 * max(bounds[2] - bounds[0], bounds[3] - bounds[1], 1.0)
        for normal, offset in zip(self.normals, self.offsets):
            if not np.any(normal):
                return Polygon()
            anchor = normal * offset
            tangent = np.array([-normal[1], normal[0]])
            far = anchor - span * normal
            half_plane = Polygon([tuple(anchor + span * tangent), tuple(anchor - span * tangent),
                                  tuple(far - span * tangent), tuple(far + span * tangent)])
            region = region.intersection(half_plane)
            if region.is_empty:
                break
        return region


def compute_bvc(p_i: Sequence[float], radius: float, neighbors: Iterable[Sequence[float]]) -> BufferedVoronoiCell:
    """
    One half-plane per neighbor. A neighbor at the owner's exact position
    yields the unsatisfiable constraint 0 . p <= -R.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    owner = np.asarray(p_i, dtype=float)
    others = np.asarray(list(neighbors), dtype=float).reshape(-1, 2)
    if others.shape[0] == 0:
        return BufferedVoronoiCell(owner, radius)
    delta = others - owner
    distance = np.linalg.norm(delta, axis=1)
    normals = np.zeros_like(delta)
    moved = distance > 0.0
    normals[moved] = delta[moved] / distance[moved, None]
    midpoints = (others + owner) / 2.0
    offsets = np.einsum("ij,ij->i", normals, midpoints) - radius
    return BufferedVoronoiCell(owner, radius, normals, offsets)


def contains(cell: BufferedVoronoiCell, p: Sequence[float]) -> bool:
    return cell.contains(p)


def segment_inside(cell: BufferedVoronoiCell, a: Sequence[float], b: Sequence[float]) -> bool:
    return cell.segment_inside(a, b)


def neighbors_within(positions: Mapping[int, Point2], agent_id: int, sensing_radius: float) -> Dict[int, Point2]:
    """Neighbors of ``agent_id`` inside the sensing radius, in ascending id order."""
    origin = np.asarray(positions[agent_id], dtype=float)
    result = {}
    for other_id in sorted(positions):
        if other_id == agent_id:
            continue
        if np.linalg.norm(np.asarray(positions[other_id], dtype=float) - origin) <= sensing_radius:
            result[other_id] = positions[other_id]
    return result


def compute_cells(positions: Mapping[int, Point2], buffer: float,
                  sensing_radius: Optional[float] = None) -> Dict[int, BufferedVoronoiCell]:
    """Cells for every agent of a position snapshot."""
    sensing = float("inf") if sensing_radius is None else sensing_radius
    return {agent_id: compute_bvc(positions[agent_id], buffer,
                                  neighbors_within(positions, agent_id, sensing).values())
            for agent_id in sorted(positions)}
