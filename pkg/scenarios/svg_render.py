#!/usr/bin/env python3
"""
Static SVG renders of a map, agent trajectories and buffered Voronoi cells.

World coordinates are scaled by PIXELS_PER_METER and the y axis is flipped
so north points up. Every coordinate goes through the same "%.3f" formatter,
which keeps the output byte-stable for identical inputs.
"""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from jinja2 import Environment, FileSystemLoader, StrictUndefined
from shapely.geometry import Polygon

from coordination.bvc import BufferedVoronoiCell, compute_cells
from planning.grid_map import Cell, GridMap
from scenarios.model import Scenario
from scenarios.trajectory_log import TrajectoryLog

logger = logging.getLogger(__name__)

PIXELS_PER_METER = 20.0
TEMPLATE_DIR = Path(__file__).parent / "templates"
TEMPLATE_NAME = "episode.svg.j2"
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22")

_environment = Environment(loader=FileSystemLoader(str(TEMPLATE_DIR)), undefined=StrictUndefined,
                           trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True,
                           autoescape=True)


def _fmt(value: float) -> str:
    text = "%.3f" % value
    return "0.000" if text == "-0.000" else text


def color_for(agent_id: int) -> str:
    return PALETTE[agent_id % len(PALETTE)]


class SvgCanvas:
    """World-to-pixel transform for one map."""

    def __init__(self, grid_map: GridMap, scale: float = PIXELS_PER_METER):
        self.grid_map = grid_map
        self.scale = scale
        self.height_m = grid_map.height_m

    @property
    def width_px(self) -> str:
        return _fmt(self.grid_map.width_m * self.scale)

    @property
    def height_px(self) -> str:
        return _fmt(self.height_m * self.scale)

    def point(self, x: float, y: float) -> Tuple[str, str]:
        return _fmt(x * self.scale), _fmt((self.height_m - y) * self.scale)

    def points(self, coordinates: Iterable[Tuple[float, float]]) -> str:
        return " ".join(",".join(self.point(x, y)) for x, y in coordinates)

    def cell_rect(self, cell: Cell) -> Dict[str, str]:
        res = self.grid_map.resolution
        x, y = self.point(cell[0] * res, (cell[1] + 1) * res)
        return {"x": x, "y": y, "size": _fmt(res * self.scale)}


def _polygon_points(canvas: SvgCanvas, polygon: Polygon) -> Optional[str]:
    if polygon.is_empty or polygon.geom_type != "Polygon":
        return None
    # drop the closing vertex, SVG polygons close themselves
    return canvas.points(list(polygon.exterior.coords)[:-1])


def render_svg(grid_map: GridMap, trajectory: Optional[TrajectoryLog] = None, out: Union[str, Path, None] = None,
               radii: Optional[Mapping[int, float]] = None,
               cells: Optional[Mapping[int, BufferedVoronoiCell]] = None,
               corridors: Optional[Mapping[str, Sequence[Cell]]] = None,
               goals: Optional[Mapping[int, Tuple[float, float]]] = None,
               title: str = "episode") -> str:
    """
    Render a map with optional trajectories and cells.

    Args:
        grid_map: occupancy grid; occupied cells become filled squares
        trajectory: agent poses per step; each agent is drawn as a polyline
            and a disk at its last recorded pose
        out: file to write, nothing is written when omitted
        radii: disk radius per agent id (default 0.4 m)
        cells: buffered Voronoi cells to draw, clipped to the map rectangle
        corridors: corridor id to cell list, shaded
        goals: goal position per agent id, drawn as outlined squares
        title: SVG title element

    Returns:
        the SVG document text

    Raises:
        OSError: the output file cannot be written
    """
    canvas = SvgCanvas(grid_map)
    radii = radii or {}
    res = grid_map.resolution

    obstacles = [canvas.cell_rect(cell) for cell in sorted(grid_map.occupied_cells(), key=lambda c: (c[1], c[0]))]

    corridor_shapes = []
    for corridor_id in sorted(corridors or {}):
        for cell in corridors[corridor_id]:
            x0, y0 = cell[0] * res, cell[1] * res
            corridor_shapes.append({"id": corridor_id,
                                    "points": canvas.points([(x0, y0), (x0 + res, y0),
                                                             (x0 + res, y0 + res), (x0, y0 + res)])})

    bounds = (0.0, 0.0, grid_map.width_m, grid_map.height_m)
    cell_shapes = []
    for agent_id in sorted(cells or {}):
        points = _polygon_points(canvas, cells[agent_id].polygon(bounds))
        if points is None:
            logger.debug(f"Cell of agent {agent_id} is empty inside the map, skipped")
            continue
        cell_shapes.append({"agent_id": agent_id, "points": points, "color": color_for(agent_id)})

    paths, disks = [], []
    if trajectory is not None:
        for agent_id, line in sorted(trajectory.polylines().items()):
            paths.append({"agent_id": agent_id, "points": canvas.points(line), "color": color_for(agent_id)})
        for agent_id, record in sorted(trajectory.final_records().items()):
            cx, cy = canvas.point(record.x, record.y)
            disks.append({"agent_id": agent_id, "cx": cx, "cy": cy, "status": record.status,
                          "r": _fmt(radii.get(agent_id, 0.4) * canvas.scale), "color": color_for(agent_id)})

    goal_marks = []
    half = res / 4.0
    for agent_id in sorted(goals or {}):
        gx, gy = goals[agent_id]
        x, y = canvas.point(gx - half, gy + half)
        goal_marks.append({"agent_id": agent_id, "x": x, "y": y, "size": _fmt(2 * half * canvas.scale),
                           "color": color_for(agent_id)})

    text = _environment.get_template(TEMPLATE_NAME).render(
        title=title, width=canvas.width_px, height=canvas.height_px, obstacles=obstacles,
        corridors=corridor_shapes, cells=cell_shapes, paths=paths, goals=goal_marks, agents=disks)

    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"Rendered {len(paths)} trajectories to {path}")
    return text


def cells_at_step(scenario: Scenario, trajectory: TrajectoryLog, step: int) -> Dict[int, BufferedVoronoiCell]:
    """Cells of the agents recorded at ``step`` against the neighbors within the scenario sensing range."""
    positions = {r.agent_id: (r.x, r.y) for r in trajectory if r.step == step and r.status != "collided"}
    if not positions:
        return {}
    buffer = max(agent.radius for agent in scenario.agents) + scenario.params.bvc_margin
    return compute_cells(positions, buffer, scenario.sensing_range())


def render_scenario(scenario: Scenario, trajectory: Optional[TrajectoryLog] = None,
                    out: Union[str, Path, None] = None, cell_step: Optional[int] = None) -> str:
    """Render a scenario map with its corridors, goals and, optionally, the cells at one step."""
    cells = cells_at_step(scenario, trajectory, cell_step) if trajectory is not None and cell_step is not None \
        else None
    corridors: Dict[str, List[Cell]] = {c.id: [tuple(cell) for cell in c.cells] for c in scenario.corridors}
    return render_svg(scenario.map.to_grid_map(), trajectory, out,
                      radii={agent.id: agent.radius for agent in scenario.agents},
                      cells=cells, corridors=corridors,
                      goals={agent.id: (agent.goal.x, agent.goal.y) for agent in scenario.agents},
                      title=scenario.name)
