#!/usr/bin/env python3
"""
Seeded scenario layouts.

warehouse   two open aisles separated by a shelf band crossed by one-cell
            corridors; agents swap to the antipodal position
open        agents on a ring in an empty room, each heading for the
            opposite side
random      random obstacle field with random reachable starts and goals
"""

import logging
import math
from collections import deque
from typing import List, Optional, Sequence, Set

import numpy as np

from planning.grid_map import Cell, heading_to_angle
from scenarios.model import AgentSpec, CorridorSpec, MapSpec, NavigationParams, PointSpec, PoseSpec, Scenario

logger = logging.getLogger(__name__)

WAREHOUSE_VARIANTS = {
    # width, shelf band height, corridor columns as fractions of the width
    "env1": (30, 8, (0.3, 0.67)),
    "env2": (40, 10, (0.2, 0.4, 0.6, 0.8)),
}
AISLE_MARGIN = 3
ROW_AGENTS = 5


def _ascii(occupied: np.ndarray) -> List[str]:
    height = occupied.shape[0]
    return ["".join("#" if cell else "." for cell in occupied[y]) for y in range(height - 1, -1, -1)]


def _pose(cell: Cell, theta: float) -> PoseSpec:
    return PoseSpec(x=cell[0] + 0.5, y=cell[1] + 0.5, theta=theta)


def _point(cell: Cell) -> PointSpec:
    return PointSpec(x=cell[0] + 0.5, y=cell[1] + 0.5)


def warehouse_scenario(variant: str = "env1", agent_count: int = 10, spacing: int = 4, seed: int = 0,
                       radius: float = 0.4, name: Optional[str] = None) -> Scenario:
    """
    Warehouse analog with ``agent_count`` agents (even), half in each aisle,
    in rows of five spread across the aisle and ``spacing`` cells apart.

    Raises:
        ValueError: unknown variant, odd agent count or spacing below 2
    """
    if variant not in WAREHOUSE_VARIANTS:
        raise ValueError(f"unknown warehouse variant '{variant}' (expected one of {sorted(WAREHOUSE_VARIANTS)})")
    if agent_count < 2 or agent_count % 2:
        raise ValueError("agent_count must be an even number >= 2")
    if spacing < 2:
        raise ValueError("spacing must be at least 2 cells")

    width, band, fractions = WAREHOUSE_VARIANTS[variant]
    columns = [int(round(x)) for x in np.linspace(AISLE_MARGIN, width - AISLE_MARGIN, ROW_AGENTS)]
    per_side = agent_count // 2
    rows = int(math.ceil(per_side / ROW_AGENTS))
    aisle = 2 * AISLE_MARGIN + (rows - 1) * spacing
    height = 2 * aisle + band

    occupied = np.zeros((height, width), dtype=bool)
    occupied[aisle:aisle + band, :] = True
    corridor_columns = [int(round(fraction * width)) for fraction in fractions]
    corridors = []
    for index, column in enumerate(corridor_columns):
        occupied[aisle:aisle + band, column] = False
        corridors.append(CorridorSpec(id=f"c{index}",
                                      cells=[(column, y) for y in range(aisle, aisle + band)]))

    agents = []
    top = [(x, height - AISLE_MARGIN - row * spacing) for row in range(rows) for x in columns][:per_side]
    for index, cell in enumerate(top):
        mirror = (width - 1 - cell[0], height - 1 - cell[1])
        agents.append(AgentSpec(id=index, start=_pose(cell, -math.pi / 2), goal=_point(mirror), radius=radius))
    for index, cell in enumerate(top):
        mirror = (width - 1 - cell[0], height - 1 - cell[1])
        agents.append(AgentSpec(id=per_side + index, start=_pose(mirror, math.pi / 2), goal=_point(cell),
                                radius=radius))

    scenario = Scenario(
        name=name or f"warehouse_{variant}_n{agent_count}_s{spacing}",
        map=MapSpec(resolution=1.0, ascii=_ascii(occupied)),
        agents=agents,
        corridors=corridors,
        params=NavigationParams(seed=seed),
    )
    logger.info(f"Generated {scenario.name}: {width}x{height} map, {len(corridors)} corridors")
    return scenario


def open_field_scenario(agent_count: int = 8, width: int = 21, height: int = 21, seed: int = 0,
                        radius: float = 0.4, heading_count: int = 8, name: Optional[str] = None) -> Scenario:
    """
    Agents on a ring around the room center, each heading for the
    antipodal cell. Ring cells are snapped to cell centers.

    Raises:
        ValueError: the ring cannot hold ``agent_count`` separated agents
    """
    center_x, center_y = (width - 1) / 2.0, (height - 1) / 2.0
    ring = min(center_x, center_y) - 1.0
    cells: List[Cell] = []
    for k in range(agent_count):
        angle = 2.0 * math.pi * k / agent_count
        cell = (int(round(center_x + ring * math.cos(angle))), int(round(center_y + ring * math.sin(angle))))
        if cell in cells:
            raise ValueError(f"{agent_count} agents do not fit on a ring in a {width}x{height} room")
        cells.append(cell)

    agents = []
    for k, cell in enumerate(cells):
        goal = cells[(k + agent_count // 2) % agent_count] if agent_count % 2 == 0 else \
            (width - 1 - cell[0], height - 1 - cell[1])
        toward = math.atan2(goal[1] - cell[1], goal[0] - cell[0])
        heading = int(round(toward / (2.0 * math.pi / heading_count))) % heading_count
        agents.append(AgentSpec(id=k, start=_pose(cell, heading_to_angle(heading, heading_count)),
                                goal=_point(goal), radius=radius))

    return Scenario(
        name=name or f"open_n{agent_count}",
        map=MapSpec(resolution=1.0, width=width, height=height, occupied=[]),
        agents=agents,
        params=NavigationParams(seed=seed, heading_count=heading_count),
    )


def _component(free: np.ndarray, seed_cell: Cell) -> Set[Cell]:
    height, width = free.shape
    seen = {seed_cell}
    queue = deque([seed_cell])
    while queue:
        x, y = queue.popleft()
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if 0 <= nx < width and 0 <= ny < height and free[ny, nx] and (nx, ny) not in seen:
                seen.add((nx, ny))
                queue.append((nx, ny))
    return seen


def _open_cells(free: np.ndarray) -> np.ndarray:
    """Free cells whose eight neighbors are free too, so a disk and its first turn fit."""
    padded = np.pad(free, 1, constant_values=False)
    height, width = free.shape
    result = free.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            result &= padded[1 + dy:1 + dy + height, 1 + dx:1 + dx + width]
    return result


def random_scenario(width: int = 20, height: int = 20, density: float = 0.15, agent_count: int = 4,
                    seed: int = 0, radius: float = 0.4, name: Optional[str] = None,
                    attempts: int = 50) -> Scenario:
    """
    Random obstacle field; starts and goals share one 4-connected free region
    and starts are at least three cells apart.

    Raises:
        ValueError: no layout found within ``attempts`` draws
    """
    rng = np.random.default_rng(seed)
    for attempt in range(attempts):
        occupied = rng.random((height, width)) < density
        free = ~occupied
        roomy = _open_cells(free)
        candidates = [tuple(int(v) for v in cell[::-1]) for cell in np.argwhere(roomy)]
        if len(candidates) < 2 * agent_count:
            continue
        region = _component(free, candidates[int(rng.integers(len(candidates)))])
        pool = sorted(cell for cell in candidates if cell in region)
        if len(pool) < 2 * agent_count:
            continue
        order = rng.permutation(len(pool))
        starts: List[Cell] = []
        for index in order:
            cell = pool[int(index)]
            if all(max(abs(cell[0] - s[0]), abs(cell[1] - s[1])) >= 3 for s in starts):
                starts.append(cell)
            if len(starts) == agent_count:
                break
        if len(starts) < agent_count:
            continue
        goals = [pool[int(index)] for index in rng.choice(len(pool), size=agent_count, replace=False)]
        headings = rng.integers(0, 8, size=agent_count)
        agents = [AgentSpec(id=k, start=_pose(starts[k], heading_to_angle(int(headings[k]), 8)),
                            goal=_point(goals[k]), radius=radius) for k in range(agent_count)]
        logger.debug(f"Random layout accepted after {attempt + 1} draws")
        return Scenario(
            name=name or f"random_{width}x{height}_s{seed}",
            map=MapSpec(resolution=1.0, ascii=_ascii(occupied)),
            agents=agents,
            params=NavigationParams(seed=seed),
        )
    raise ValueError(f"no random layout with {agent_count} agents after {attempts} draws")


def generate(kind: str, agent_count: int, spacing: int = 4, seed: int = 0,
             size: Sequence[int] = (20, 20)) -> Scenario:
    """Dispatch used by the command line."""
    if kind in WAREHOUSE_VARIANTS:
        return warehouse_scenario(kind, agent_count, spacing, seed)
    if kind == "open":
        return open_field_scenario(agent_count, size[0], size[1], seed)
    if kind == "random":
        return random_scenario(size[0], size[1], agent_count=agent_count, seed=seed)
    raise ValueError(f"unknown layout '{kind}'")
