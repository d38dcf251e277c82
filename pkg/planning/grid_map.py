#!/usr/bin/env python3
"""
Environment model: occupancy grid, poses and lattice nodes.

Cells are indexed (cell_x, cell_y) with y growing upward. The occupancy
array is stored row-major as ``occupancy[cell_y, cell_x]``. Anything outside
the map counts as occupied.
"""

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi

Cell = Tuple[int, int]

COMPASS_HEADINGS = {
    "E": 0.0,
    "NE": math.pi / 4,
    "N": math.pi / 2,
    "NW": 3 * math.pi / 4,
    "W": math.pi,
    "SW": 5 * math.pi / 4,
    "S": 3 * math.pi / 2,
    "SE": 7 * math.pi / 4,
}


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [0, 2*pi)."""
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


def angle_difference(a: float, b: float) -> float:
    """Smallest absolute difference between two angles."""
    diff = abs(normalize_angle(a) - normalize_angle(b))
    return min(diff, TWO_PI - diff)


def heading_to_angle(heading: int, heading_count: int) -> float:
    return normalize_angle(TWO_PI * (heading % heading_count) / heading_count)


def angle_to_heading(theta: float, heading_count: int, tolerance: float = 1e-6) -> int:
    """
    Map an angle onto the nearest lattice heading index.

    Raises:
        ValueError: if the angle is further than ``tolerance`` from every heading
    """
    step = TWO_PI / heading_count
    index = int(round(normalize_angle(theta) / step)) % heading_count
    if angle_difference(theta, heading_to_angle(index, heading_count)) > tolerance:
        raise ValueError(f"angle {theta:.6f} is not one of {heading_count} lattice headings")
    return index


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True, order=True)
class LatticeNode:
    cell_x: int
    cell_y: int
    heading: int

    @property
    def cell(self) -> Cell:
        return (self.cell_x, self.cell_y)


class GridMap:
    """Static occupancy grid with a fixed metric resolution."""

    def __init__(self, occupancy: np.ndarray, resolution: float = 1.0):
        occupancy = np.asarray(occupancy, dtype=bool)
        if occupancy.ndim != 2 or occupancy.size == 0:
            raise ValueError("occupancy must be a non-empty 2-D array")
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.occupancy = occupancy.copy()
        self.occupancy.setflags(write=False)
        self.resolution = float(resolution)

    @classmethod
    def from_ascii(cls, rows: Sequence[str], resolution: float = 1.0) -> "GridMap":
        """Build a map from ASCII rows listed top to bottom ('#' occupied)."""
        height = len(rows)
        width = len(rows[0]) if height else 0
        grid = np.zeros((height, width), dtype=bool)
        for row_index, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(f"ASCII row {row_index} has length {len(row)}, expected {width}")
            cell_y = height - 1 - row_index
            for cell_x, char in enumerate(row):
                grid[cell_y, cell_x] = char == "#"
        return cls(grid, resolution)

    @classmethod
    def from_cells(cls, width: int, height: int, occupied: Iterable[Cell],
                   resolution: float = 1.0) -> "GridMap":
        grid = np.zeros((height, width), dtype=bool)
        for cell_x, cell_y in occupied:
            grid[cell_y, cell_x] = True
        return cls(grid, resolution)

    @classmethod
    def empty(cls, width: int, height: int, resolution: float = 1.0) -> "GridMap":
        return cls(np.zeros((height, width), dtype=bool), resolution)

    @property
    def width_cells(self) -> int:
        return int(self.occupancy.shape[1])

    @property
    def height_cells(self) -> int:
        return int(self.occupancy.shape[0])

    @property
    def width_m(self) -> float:
        return self.width_cells * self.resolution

    @property
    def height_m(self) -> float:
        return self.height_cells * self.resolution

    def in_bounds(self, cell_x: int, cell_y: int) -> bool:
        return 0 <= cell_x < self.width_cells and 0 <= cell_y < self.height_cells

    def is_occupied(self, cell_x: int, cell_y: int) -> bool:
        if not self.in_bounds(cell_x, cell_y):
            return True
        return bool(self.occupancy[cell_y, cell_x])

    def cell_center(self, cell_x: int, cell_y: int) -> Tuple[float, float]:
        return ((cell_x + 0.5) * self.resolution, (cell_y + 0.5) * self.resolution)

    def cell_of(self, x: float, y: float) -> Cell:
        return (int(math.floor(x / self.resolution)), int(math.floor(y / self.resolution)))

    def is_cell_center(self, x: float, y: float, tolerance: float = 1e-6) -> bool:
        cell_x, cell_y = self.cell_of(x, y)
        center_x, center_y = self.cell_center(cell_x, cell_y)
        return math.hypot(x - center_x, y - center_y) <= tolerance * self.resolution

    def occupied_cells(self) -> List[Cell]:
        ys, xs = np.nonzero(self.occupancy)
        return sorted(zip(xs.tolist(), ys.tolist()))

    def with_blocked(self, cells: Iterable[Cell]) -> "GridMap":
        """Copy of the map with extra cells marked occupied (out-of-range cells ignored)."""
        grid = self.occupancy.copy()
        for cell_x, cell_y in cells:
            if self.in_bounds(cell_x, cell_y):
                grid[cell_y, cell_x] = True
        return GridMap(grid, self.resolution)

    def distance_to_occupied(self, x: float, y: float, search_radius: float) -> float:
        """
        Distance from a point to the nearest occupied (or out-of-map) cell square.

        Only cells within ``search_radius`` are examined; ``inf`` is returned
        when none is found.
        """
        res = self.resolution
        reach = int(math.ceil(search_radius / res)) + 1
        base_x, base_y = self.cell_of(x, y)
        best = math.inf
        for cell_y in range(base_y - reach, base_y + reach + 1):
            for cell_x in range(base_x - reach, base_x + reach + 1):
                if not self.is_occupied(cell_x, cell_y):
                    continue
                dx = max(cell_x * res - x, 0.0, x - (cell_x + 1) * res)
                dy = max(cell_y * res - y, 0.0, y - (cell_y + 1) * res)
                best = min(best, math.hypot(dx, dy))
        return best

    def disk_is_free(self, x: float, y: float, radius: float) -> bool:
        return self.distance_to_occupied(x, y, radius) >= radius

    def to_ascii(self) -> List[str]:
        rows = []
        for cell_y in range(self.height_cells - 1, -1, -1):
            rows.append("".join("#" if self.occupancy[cell_y, x] else "." for x in range(self.width_cells)))
        return rows

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridMap):
            return NotImplemented
        return self.resolution == other.resolution and np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self) -> int:
        return hash((self.resolution, self.occupancy.shape, self.occupancy.tobytes()))

    def __repr__(self) -> str:
        return f"GridMap({self.width_cells}x{self.height_cells}, resolution={self.resolution})"
