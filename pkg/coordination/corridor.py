#!/usr/bin/env python3
"""
Corridor reservations.

Each narrow passage carries one record (status, direction, start, end).
Requests are decided by three cases:

1. free or expired: a new window is granted
2. reserved in the same direction: the end time is extended
3. reserved in the opposite direction and not expired: denied

A denied agent replans with the corridor's end cells marked as temporary
obstacles, or waits at a standoff point when no alternative exists.
"""

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from database.reservation_store import InMemoryReservationStore, ReservationStore
from planning.errors import InvalidParameterError, NavigationError, PlanningError
from planning.grid_map import Cell, GridMap, Pose
from planning.path import Path
from planning.planner import LatticePlanner, PlanQuery

logger = logging.getLogger(__name__)

DEFAULT_TRIGGER_RADIUS = 5.0
TEMPORARY_OBSTACLE_CELLS = 2


class UnknownCorridorError(NavigationError):
    """A request referenced a corridor id that is not in the table."""


class CorridorDirection(Enum):
    A_TO_B = "a->b"
    B_TO_A = "b->a"
    NONE = "none"

    def opposite(self) -> "CorridorDirection":
        if self is CorridorDirection.A_TO_B:
            return CorridorDirection.B_TO_A
        if self is CorridorDirection.B_TO_A:
            return CorridorDirection.A_TO_B
        return CorridorDirection.NONE


class ReservationStatus(Enum):
    FREE = "free"
    RESERVED = "reserved"


class ReservationDecision(Enum):
    GRANTED_NEW = "granted_new"
    GRANTED_EXTENDED = "granted_extended"
    DENIED = "denied"

    @property
    def granted(self) -> bool:
        return self is not ReservationDecision.DENIED


@dataclass(frozen=True)
class Corridor:
    id: str
    cells: Tuple[Cell, ...]
    resolution: float = 1.0

    def __post_init__(self):
        if not self.cells:
            raise InvalidParameterError(f"corridor '{self.id}' has no cells")
        object.__setattr__(self, "cells", tuple(tuple(c) for c in self.cells))

    @property
    def portal_a(self) -> Cell:
        return self.cells[0]

    @property
    def portal_b(self) -> Cell:
        return self.cells[-1]

    def _hops(self) -> List[float]:
        return [math.hypot(b[0] - a[0], b[1] - a[1]) * self.resolution
                for a, b in zip(self.cells, self.cells[1:])]

    @property
    def length(self) -> float:
        """Center-line length plus one cell, so an n-cell straight corridor is n cells long."""
        return self.resolution + sum(self._hops())

    def remaining_length(self, cell_index: int, direction: CorridorDirection) -> float:
        hops = self._hops()
        if direction is CorridorDirection.B_TO_A:
            return self.resolution + sum(hops[:cell_index])
        return self.resolution + sum(hops[cell_index:])

    def index_of(self, cell: Cell) -> int:
        return self.cells.index(tuple(cell))

    def contains(self, cell: Cell) -> bool:
        return tuple(cell) in self.cells

    def end_cells(self, count: int = TEMPORARY_OBSTACLE_CELLS) -> FrozenSet[Cell]:
        """The ``count`` cells nearest each portal."""
        return frozenset(self.cells[:count]) | frozenset(self.cells[-count:])

    def entry_cell(self, direction: CorridorDirection) -> Cell:
        return self.portal_b if direction is CorridorDirection.B_TO_A else self.portal_a


@dataclass(frozen=True)
class ReservationRecord:
    status: ReservationStatus = ReservationStatus.FREE
    direction: CorridorDirection = CorridorDirection.NONE
    start_time: float = 0.0
    end_time: float = 0.0

    def __post_init__(self):
        if self.status is ReservationStatus.RESERVED:
            if self.direction is CorridorDirection.NONE:
                raise ValueError("reserved record needs a direction")
            if not self.end_time > self.start_time:
                raise ValueError("reserved record needs end_time > start_time")
        elif self.direction is not CorridorDirection.NONE:
            raise ValueError("free record cannot carry a direction")

    def is_expired(self, now: float) -> bool:
        return self.status is ReservationStatus.RESERVED and now > self.end_time

    def is_active(self, now: float) -> bool:
        return self.status is ReservationStatus.RESERVED and not now > self.end_time

    def to_dict(self) -> Dict:
        return {"status": self.status.value, "direction": self.direction.value,
                "start_time": self.start_time, "end_time": self.end_time}

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> "ReservationRecord":
        if not data:
            return cls()
        return cls(ReservationStatus(data["status"]), CorridorDirection(data["direction"]),
                   float(data["start_time"]), float(data["end_time"]))


@dataclass(frozen=True)
class ReservationEvent:
    time: float
    agent_id: int
    corridor_id: str
    direction: str
    decision: str
    start_time: float
    end_time: float

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class CorridorRequest:
    corridor_id: str
    direction: CorridorDirection
    eta: float
    traverse_duration: float
    distance: float


@dataclass(frozen=True)
class Traversal:
    corridor_id: str
    direction: CorridorDirection
    entry_index: int
    exit_index: int
    distance: float
    entry_cell_index: int


class ReservationTable:
    """
    Single writer over the corridor records. Callers serialize requests
    (ascending agent id within a step); the store may be shared.
    """

    def __init__(self, corridors: Iterable[Corridor], store: Optional[ReservationStore] = None):
        self.corridors: Dict[str, Corridor] = {}
        for corridor in corridors:
            if corridor.id in self.corridors:
                raise InvalidParameterError(f"duplicate corridor id '{corridor.id}'")
            self.corridors[corridor.id] = corridor
        self.store = store if store is not None else InMemoryReservationStore()
        self._cells: Dict[Cell, str] = {}
        for corridor in self.corridors.values():
            for cell in corridor.cells:
                self._cells.setdefault(cell, corridor.id)
        self.denials = 0

    def corridor(self, corridor_id: str) -> Corridor:
        try:
            return self.corridors[corridor_id]
        except KeyError:
            raise UnknownCorridorError(f"unknown corridor '{corridor_id}'") from None

    def corridor_at(self, cell: Cell) -> Optional[Corridor]:
        corridor_id = self._cells.get(tuple(cell))
        return self.corridors[corridor_id] if corridor_id is not None else None

    def record(self, corridor_id: str) -> ReservationRecord:
        self.corridor(corridor_id)
        return ReservationRecord.from_dict(self.store.get(corridor_id))

    def request(self, corridor_id: str, direction: CorridorDirection, eta: float, traverse_duration: float,
                now: float, agent_id: int = -1) -> ReservationDecision:
        """
        Decide a reservation request.

        Raises:
            UnknownCorridorError: corridor id not in the table
            InvalidParameterError: eta before now, non-positive duration or no direction
        """
        record = self.record(corridor_id)
        if direction is CorridorDirection.NONE:
            raise InvalidParameterError("request needs a direction")
        if eta < now:
            raise InvalidParameterError(f"eta {eta} is before now {now}")
        if traverse_duration <= 0:
            raise InvalidParameterError("traverse_duration must be positive")

        if record.status is ReservationStatus.FREE or record.is_expired(now):
            decision = ReservationDecision.GRANTED_NEW
            record = ReservationRecord(ReservationStatus.RESERVED, direction, eta, eta + traverse_duration)
        elif record.direction is direction:
            decision = ReservationDecision.GRANTED_EXTENDED
            record = ReservationRecord(ReservationStatus.RESERVED, direction, record.start_time,
                                       max(record.end_time, eta + traverse_duration))
        else:
            decision = ReservationDecision.DENIED
            self.denials += 1

        if decision.granted:
            self.store.put(corridor_id, record.to_dict())
        event = ReservationEvent(now, agent_id, corridor_id, direction.value, decision.value,
                                 record.start_time, record.end_time)
        self.store.append_event(event.to_dict())
        log = logger.info if decision is not ReservationDecision.GRANTED_EXTENDED else logger.debug
        log(f"t={now:.2f} agent {agent_id} {corridor_id} {direction.value}: {decision.value} "
            f"[{record.start_time:.2f}, {record.end_time:.2f}]")
        return decision

    def would_grant(self, corridor_id: str, direction: CorridorDirection, now: float) -> bool:
        record = self.record(corridor_id)
        return not record.is_active(now) or record.direction is direction

    def holds(self, corridor_id: str, direction: CorridorDirection, now: float) -> bool:
        record = self.record(corridor_id)
        return record.is_active(now) and record.direction is direction

    def events(self) -> List[ReservationEvent]:
        return [ReservationEvent(**event) for event in self.store.events()]

    def traversals(self, path: Path, from_index: int = 0) -> List[Traversal]:
        """Corridor runs of ``path`` after ``from_index``, in order."""
        grid_res = path.resolution
        result: List[Traversal] = []
        index = from_index
        last = len(path.poses) - 1
        while index <= last:
            pose = path.poses[index]
            cell = (int(math.floor(pose.x / grid_res)), int(math.floor(pose.y / grid_res)))
            corridor = self.corridor_at(cell)
            if corridor is None:
                index += 1
                continue
            entry_index = index
            first = last_cell = corridor.index_of(cell)
            while index + 1 <= last:
                nxt = path.poses[index + 1]
                nxt_cell = (int(math.floor(nxt.x / grid_res)), int(math.floor(nxt.y / grid_res)))
                if not corridor.contains(nxt_cell):
                    break
                index += 1
                last_cell = corridor.index_of(nxt_cell)
            if last_cell > first:
                direction = CorridorDirection.A_TO_B
            elif last_cell < first:
                direction = CorridorDirection.B_TO_A
            else:
                direction = CorridorDirection.A_TO_B if first == 0 else CorridorDirection.B_TO_A
            distance = path.cumulative[entry_index] - path.cumulative[from_index]
            result.append(Traversal(corridor.id, direction, entry_index, index, distance, first))
            index += 1
        return result

    def next_traversal(self, path: Path, from_index: int = 0) -> Optional[Traversal]:
        traversals = self.traversals(path, from_index)
        return traversals[0] if traversals else None


def trigger_check(path: Path, index: int, table: ReservationTable, trigger_radius: float, now: float,
                  nominal_speed: float) -> Optional[CorridorRequest]:
    """
    Request for the next corridor on the path once its entry is within
    ``trigger_radius`` along the path; the eta is a lower bound at nominal speed.
    """
    traversal = table.next_traversal(path, index)
    if traversal is None or traversal.distance > trigger_radius:
        return None
    corridor = table.corridor(traversal.corridor_id)
    if traversal.distance > 0:
        length = corridor.length
    else:
        length = corridor.remaining_length(traversal.entry_cell_index, traversal.direction)
    return CorridorRequest(corridor.id, traversal.direction, now + traversal.distance / nominal_speed,
                           length / nominal_speed, traversal.distance)


@dataclass(frozen=True)
class DenialOutcome:
    path: Optional[Path]
    blocked: FrozenSet[Cell]
    waiting: bool


def on_denied(path: Path, index: int, goal: Pose, corridor: Corridor, planner: LatticePlanner,
              avoided: FrozenSet[Cell] = frozenset(), epsilon: float = 2.0,
              obstacle_cells: int = TEMPORARY_OBSTACLE_CELLS) -> DenialOutcome:
    """
    Replan around a denied corridor from the next lattice node of ``path``.

    The corridor's end cells become temporary obstacles, together with the
    cells of corridors the agent already avoids; if that leaves no path the
    older avoidances are dropped. When the denied corridor is the only way,
    the outcome asks the agent to wait.
    """
    temporary = corridor.end_cells(obstacle_cells)
    anchor = path.next_node_index(index)
    if anchor is None:
        return DenialOutcome(None, avoided, True)
    lead = path.suffix(index).prefix(anchor - index)
    lead_cells = {(int(math.floor(p.x / path.resolution)), int(math.floor(p.y / path.resolution)))
                  for p in lead.poses}
    attempts = [avoided | temporary] + ([temporary] if avoided - temporary else [])
    for blocked in attempts:
        if lead_cells & blocked:
            continue
        try:
            tail = planner.plan(PlanQuery(path.poses[anchor], goal, epsilon, planner.expansion_budget), blocked)
        except PlanningError as e:
            logger.debug(f"Replan around {corridor.id} with {len(blocked)} blocked cells failed: {e}")
            continue
        logger.info(f"Rerouted around corridor {corridor.id} (length {lead.length + tail.length:.2f})")
        return DenialOutcome(lead.concat(tail), blocked, False)
    logger.info(f"No route around corridor {corridor.id}; waiting for the reservation to expire")
    return DenialOutcome(None, avoided, True)


def standoff_index(path: Path, index: int, traversal: Traversal, standoff_distance: float) -> int:
    """Last lattice node at least ``standoff_distance`` before the corridor entry, never behind ``index``."""
    entry_cost = path.cumulative[traversal.entry_index]
    best = index
    for node_index in path.node_indices:
        if node_index < index or node_index >= traversal.entry_index:
            continue
        if entry_cost - path.cumulative[node_index] >= standoff_distance - 1e-9:
            best = node_index
    return best


def free_spans(grid_map: GridMap) -> Tuple[np.ndarray, np.ndarray]:
    """Per free cell, the length of its horizontal and vertical free runs (0 on obstacles)."""
    free = ~grid_map.occupancy
    height, width = free.shape
    horizontal = np.zeros((height, width), dtype=int)
    vertical = np.zeros((height, width), dtype=int)
    for y in range(height):
        x = 0
        while x < width:
            if not free[y, x]:
                x += 1
                continue
            end = x
            while end < width and free[y, end]:
                end += 1
            horizontal[y, x:end] = end - x
            x = end
    for x in range(width):
        y = 0
        while y < height:
            if not free[y, x]:
                y += 1
                continue
            end = y
            while end < height and free[end, x]:
                end += 1
            vertical[y:end, x] = end - y
            y = end
    return horizontal, vertical


def validate_corridor(corridor: Corridor, grid_map: GridMap, width_threshold: int = 1) -> List[str]:
    """Names of the corridor invariants the map violates; empty when valid."""
    problems = []
    cells = list(corridor.cells)
    if len(set(cells)) != len(cells):
        problems.append("corridor-cells-unique")
    if any(not grid_map.in_bounds(x, y) for x, y in cells):
        problems.append("corridor-cells-in-bounds")
        return problems
    if any(grid_map.is_occupied(x, y) for x, y in cells):
        problems.append("corridor-cells-free")
        return problems
    if any(max(abs(a[0] - b[0]), abs(a[1] - b[1])) != 1 for a, b in zip(cells, cells[1:])):
        problems.append("corridor-connected")
    horizontal, vertical = free_spans(grid_map)
    if any(min(horizontal[y, x], vertical[y, x]) > width_threshold for x, y in cells):
        problems.append("corridor-narrow")
    return problems


def detect_narrow_passages(grid_map: GridMap, width_threshold: int = 1, min_cells: int = 1) -> List[Corridor]:
    """
    Axis-aligned narrow passages: free cells whose free run across the
    passage is at most ``width_threshold`` cells while the run along it is
    longer. Connected cells of the same orientation form one corridor,
    ordered bottom-to-top or left-to-right.
    """
    horizontal, vertical = free_spans(grid_map)
    free = ~grid_map.occupancy
    vertical_cells = free & (horizontal <= width_threshold) & (vertical > width_threshold)
    horizontal_cells = free & (vertical <= width_threshold) & (horizontal > width_threshold)

    corridors: List[Corridor] = []
    for label, mask, order in (("v", vertical_cells, lambda c: (c[1], c[0])),
                               ("h", horizontal_cells, lambda c: (c[0], c[1]))):
        seen = np.zeros_like(mask)
        height, width = mask.shape
        for y in range(height):
            for x in range(width):
                if not mask[y, x] or seen[y, x]:
                    continue
                component = []
                queue = deque([(x, y)])
                seen[y, x] = True
                while queue:
                    cx, cy = queue.popleft()
                    component.append((cx, cy))
                    for nx, ny in ((cx + 1, cy), (cx - 1, cy), (cx, cy + 1), (cx, cy - 1)):
                        if 0 <= nx < width and 0 <= ny < height and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((nx, ny))
                if len(component) < min_cells:
                    continue
                corridors.append(Corridor(f"auto-{label}{len(corridors) + 1}", tuple(sorted(component, key=order)),
                                          grid_map.resolution))
    logger.info(f"Detected {len(corridors)} narrow passages")
    return corridors
