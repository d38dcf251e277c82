#!/usr/bin/env python3
"""
State-lattice graph over a GridMap.

A primitive's footprint is the set of cell offsets, relative to the start
node, whose squares come closer than the agent radius to the swept
polyline. The footprint does not depend on where the primitive is placed,
so each one is computed once and the per-cell validity of every primitive
is rasterized with shifted ORs over the occupancy array.
"""

import logging
import math
from collections import OrderedDict
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np
from shapely.geometry import LineString, Point, box

from planning.errors import InvalidQueryError
from planning.grid_map import Cell, GridMap, LatticeNode, Pose, angle_to_heading, heading_to_angle
from planning.primitives import MotionPrimitive, PrimitiveSet

logger = logging.getLogger(__name__)

CONTACT_TOLERANCE = 1e-9
VIEW_CACHE_SIZE = 64

Successor = Tuple[LatticeNode, MotionPrimitive, float]


def _sweep_geometry(points: Iterable[Tuple[float, float]]):
    unique: List[Tuple[float, float]] = []
    for point in points:
        if not unique or point != unique[-1]:
            unique.append(point)
    if len(unique) == 1:
        return Point(unique[0])
    return LineString(unique)


def _footprint(geometry, radius: float, resolution: float) -> Tuple[Cell, ...]:
    min_x, min_y, max_x, max_y = geometry.bounds
    lo_x = int(math.floor((min_x - radius) / resolution)) - 1
    hi_x = int(math.ceil((max_x + radius) / resolution)) + 1
    lo_y = int(math.floor((min_y - radius) / resolution)) - 1
    hi_y = int(math.ceil((max_y + radius) / resolution)) + 1
    cells = []
    for oy in range(lo_y, hi_y + 1):
        for ox in range(lo_x, hi_x + 1):
            square = box((ox - 0.5) * resolution, (oy - 0.5) * resolution,
                         (ox + 0.5) * resolution, (oy + 0.5) * resolution)
            if geometry.distance(square) < radius - CONTACT_TOLERANCE:
                cells.append((ox, oy))
    return tuple(sorted(cells))


@lru_cache(maxsize=4096)
def primitive_footprint(primitive: MotionPrimitive, radius: float, resolution: float) -> Tuple[Cell, ...]:
    """Cell offsets a disk of ``radius`` touches while following the primitive from a cell center."""
    return _footprint(_sweep_geometry((p.x, p.y) for p in primitive.sweep), radius, resolution)


@lru_cache(maxsize=256)
def disk_footprint(radius: float, resolution: float) -> Tuple[Cell, ...]:
    return _footprint(Point(0.0, 0.0), radius, resolution)


def placed_sweep_collision_free(primitive: MotionPrimitive, node: LatticeNode, grid_map: GridMap,
                                radius: float) -> bool:
    """True iff the disk swept along the primitive placed at ``node`` stays off occupied cells."""
    for ox, oy in primitive_footprint(primitive, radius, grid_map.resolution):
        if grid_map.is_occupied(node.cell_x + ox, node.cell_y + oy):
            return False
    return True


def successors(node: LatticeNode, grid_map: GridMap, primitives: PrimitiveSet,
               radius: float) -> List[Successor]:
    result = []
    for primitive in primitives.for_heading(node.heading):
        if placed_sweep_collision_free(primitive, node, grid_map, radius):
            dx, dy = primitive.end_offset
            result.append((LatticeNode(node.cell_x + dx, node.cell_y + dy, primitive.end_heading),
                           primitive, primitive.cost))
    return result


def _free_mask(occupancy: np.ndarray, offsets: Iterable[Cell]) -> np.ndarray:
    """Cells from which every offset lands on a free in-map cell."""
    offsets = list(offsets)
    height, width = occupancy.shape
    pad = max([max(abs(ox), abs(oy)) for ox, oy in offsets] + [0])
    padded = np.pad(occupancy, pad, mode="constant", constant_values=True)
    hit = np.zeros((height, width), dtype=bool)
    for ox, oy in offsets:
        hit |= padded[pad + oy:pad + oy + height, pad + ox:pad + ox + width]
    return ~hit


class LatticeGraph:
    """
    Implicit search graph: valid nodes plus the primitives applicable at each.

    Instances are immutable. ``view(blocked)`` returns a cached graph over
    the same primitives with extra cells treated as obstacles.
    """

    def __init__(self, grid_map: GridMap, primitives: PrimitiveSet, radius: float,
                 blocked: FrozenSet[Cell] = frozenset(),
                 _footprints: Optional[Dict[int, Tuple[Tuple[Cell, ...], ...]]] = None):
        self.base_map = grid_map
        self.blocked = frozenset(blocked)
        self.grid_map = grid_map.with_blocked(self.blocked) if self.blocked else grid_map
        self.primitives = primitives
        self.radius = float(radius)
        self.resolution = grid_map.resolution
        self.heading_count = primitives.heading_count

        if _footprints is None:
            _footprints = {
                heading: tuple(primitive_footprint(p, self.radius, self.resolution)
                               for p in primitives.for_heading(heading))
                for heading in range(self.heading_count)
            }
        self._footprints = _footprints
        occupancy = self.grid_map.occupancy
        self.free_space = _free_mask(occupancy, disk_footprint(self.radius, self.resolution))
        self._masks = {
            heading: tuple(_free_mask(occupancy, offsets) for offsets in footprints)
            for heading, footprints in _footprints.items()
        }
        self._views: "OrderedDict[FrozenSet[Cell], LatticeGraph]" = OrderedDict()

    def view(self, blocked: Iterable[Cell]) -> "LatticeGraph":
        blocked = frozenset(blocked) | self.blocked
        if blocked == self.blocked:
            return self
        root = self
        cached = root._views.get(blocked)
        if cached is not None:
            root._views.move_to_end(blocked)
            return cached
        graph = LatticeGraph(self.base_map, self.primitives, self.radius, blocked, self._footprints)
        root._views[blocked] = graph
        if len(root._views) > VIEW_CACHE_SIZE:
            root._views.popitem(last=False)
        return graph

    def is_valid_node(self, node: LatticeNode) -> bool:
        if not 0 <= node.heading < self.heading_count:
            return False
        if not self.grid_map.in_bounds(node.cell_x, node.cell_y):
            return False
        return bool(self.free_space[node.cell_y, node.cell_x])

    def is_free_cell(self, cell: Cell) -> bool:
        cell_x, cell_y = cell
        return self.grid_map.in_bounds(cell_x, cell_y) and bool(self.free_space[cell_y, cell_x])

    def node_pose(self, node: LatticeNode) -> Pose:
        x, y = self.grid_map.cell_center(node.cell_x, node.cell_y)
        return Pose(x, y, heading_to_angle(node.heading, self.heading_count))

    def node_at(self, pose: Pose) -> LatticeNode:
        """
        Lattice node matching a pose.

        Raises:
            InvalidQueryError: pose is not at a cell center with a lattice heading
        """
        tolerance = self.resolution / 10.0
        cell_x, cell_y = self.grid_map.cell_of(pose.x, pose.y)
        center_x, center_y = self.grid_map.cell_center(cell_x, cell_y)
        if math.hypot(pose.x - center_x, pose.y - center_y) > tolerance:
            raise InvalidQueryError(f"pose ({pose.x:.3f}, {pose.y:.3f}) is not at a cell center")
        try:
            heading = angle_to_heading(pose.theta, self.heading_count)
        except ValueError as e:
            raise InvalidQueryError(str(e)) from e
        return LatticeNode(cell_x, cell_y, heading)

    def successors(self, node: LatticeNode) -> List[Successor]:
        result = []
        for primitive, mask in zip(self.primitives.for_heading(node.heading), self._masks[node.heading]):
            if mask[node.cell_y, node.cell_x]:
                dx, dy = primitive.end_offset
                result.append((LatticeNode(node.cell_x + dx, node.cell_y + dy, primitive.end_heading),
                               primitive, primitive.cost))
        return result

    def relaxed_moves(self) -> List[Tuple[Cell, float, np.ndarray]]:
        """
        Position-only relaxation of the lattice: one entry per distinct nonzero
        offset with the cheapest primitive cost and the cells it can start from.
        """
        moves: Dict[Cell, Tuple[float, np.ndarray]] = {}
        for heading in range(self.heading_count):
            for primitive, mask in zip(self.primitives.for_heading(heading), self._masks[heading]):
                if primitive.is_rotation:
                    continue
                offset = primitive.end_offset
                if offset in moves:
                    cost, combined = moves[offset]
                    moves[offset] = (min(cost, primitive.cost), combined | mask)
                else:
                    moves[offset] = (primitive.cost, mask.copy())
        return [(offset, cost, mask) for offset, (cost, mask) in sorted(moves.items())]

    def __repr__(self) -> str:
        return (f"LatticeGraph({self.grid_map!r}, headings={self.heading_count}, "
                f"radius={self.radius}, blocked={len(self.blocked)})")
