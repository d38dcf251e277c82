#!/usr/bin/env python3
"""
Scenario files: YAML in, validated ``Scenario`` out, and back.
"""

import itertools
import logging
import math
from pathlib import Path
from typing import Any, List, Optional, Sequence, Union

import yaml
from pydantic import ValidationError

from coordination.corridor import Corridor, validate_corridor
from planning.grid_map import angle_to_heading
from scenarios.errors import ScenarioParseError, ScenarioValidationError
from scenarios.model import Scenario

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _line_of(text: str, location: Sequence[Any]) -> Optional[int]:
    """1-based line of the deepest YAML node along a pydantic error location."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = node.start_mark.line + 1 if node is not None else None
    for part in location:
        child = None
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                if key.value == str(part):
                    child = value
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            child = node.value[part]
        if child is None:
            break
        node = child
        line = node.start_mark.line + 1
    return line


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """
    Parse and validate scenario YAML.

    Raises:
        ScenarioParseError: malformed YAML or a schema violation (with line and field)
        ScenarioValidationError: a semantic invariant does not hold
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ScenarioParseError(f"{source}: {getattr(e, 'problem', None) or e}",
                                 line=mark.line + 1 if mark is not None else None) from e
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{source}: top level must be a mapping", line=1)

    try:
        scenario = Scenario.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        field = ".".join(str(part) for part in error["loc"]) or None
        raise ScenarioParseError(f"{source}: {field}: {error['msg']}", line=_line_of(text, error["loc"]),
                                 field=field) from e

    validate_scenario(scenario)
    return scenario


def load_scenario(path: PathLike) -> Scenario:
    path = Path(path)
    scenario = parse_scenario(path.read_text(encoding="utf-8"), source=str(path))
    logger.info(f"Loaded scenario '{scenario.name}' from {path}: {len(scenario.agents)} agents, "
                f"{len(scenario.corridors)} corridors")
    return scenario


def dump_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=False, default_flow_style=None)


def save_scenario(scenario: Scenario, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_scenario(scenario), encoding="utf-8")
    return path


def _fail(invariant: str, message: str):
    raise ScenarioValidationError(invariant, message)


def validate_scenario(scenario: Scenario) -> None:
    """
    Check the invariants that need the map or more than one field.

    Raises:
        ScenarioValidationError: naming the first violated invariant
    """
    grid_map = scenario.map.to_grid_map()
    params = scenario.params
    res = grid_map.resolution

    ids = [agent.id for agent in scenario.agents]
    if len(set(ids)) != len(ids):
        _fail("agent-ids-unique", f"duplicate agent ids in {sorted(ids)}")

    turn_radius = params.turn_radius if params.turn_radius is not None else res
    if turn_radius < res:
        _fail("turn-radius", f"turn_radius {turn_radius} is below the map resolution {res}")

    for agent in scenario.agents:
        start = agent.start.to_pose()
        cell = grid_map.cell_of(start.x, start.y)
        if not grid_map.is_cell_center(start.x, start.y) or grid_map.is_occupied(*cell):
            _fail("start-on-free-node", f"agent {agent.id} start ({start.x}, {start.y}) is not a free cell center")
        try:
            angle_to_heading(start.theta, params.heading_count)
        except ValueError:
            _fail("start-on-free-node", f"agent {agent.id} start heading {start.theta:.6f} is not one of "
                                        f"{params.heading_count} lattice headings")
        if not grid_map.disk_is_free(start.x, start.y, agent.radius):
            _fail("start-clearance", f"agent {agent.id} disk of radius {agent.radius} overlaps an obstacle")
        goal_cell = grid_map.cell_of(agent.goal.x, agent.goal.y)
        if grid_map.is_occupied(*goal_cell):
            _fail("goal-on-free-cell", f"agent {agent.id} goal cell {goal_cell} is occupied or outside the map")

    for a, b in itertools.combinations(scenario.agents, 2):
        gap = math.hypot(a.start.x - b.start.x, a.start.y - b.start.y)
        if gap <= a.radius + b.radius:
            _fail("start-separation", f"agents {a.id} and {b.id} start {gap:.3f} m apart, "
                                      f"need more than {a.radius + b.radius:.3f} m")

    task_ids = [task.task_id for task in scenario.tasks]
    if len(set(task_ids)) != len(task_ids):
        _fail("task-ids-unique", "duplicate task ids")
    for task in scenario.tasks:
        if task.agent not in ids:
            _fail("task-agent-exists", f"task {task.task_id} names unknown agent {task.agent}")
        if grid_map.is_occupied(*grid_map.cell_of(task.goal.x, task.goal.y)):
            _fail("goal-on-free-cell", f"task {task.task_id} goal is occupied or outside the map")

    corridor_ids = [spec.id for spec in scenario.corridors]
    if len(set(corridor_ids)) != len(corridor_ids):
        _fail("corridor-ids-unique", "duplicate corridor ids")
    for spec in scenario.corridors:
        corridor = Corridor(spec.id, tuple(tuple(cell) for cell in spec.cells), res)
        problems = validate_corridor(corridor, grid_map, params.corridor_width_threshold)
        if problems:
            _fail(problems[0], f"corridor '{spec.id}' violates {', '.join(problems)}")
    claimed = {}
    for spec in scenario.corridors:
        for cell in spec.cells:
            cell = tuple(cell)
            if cell in claimed:
                _fail("corridors-disjoint", f"cell {cell} belongs to corridors '{claimed[cell]}' and '{spec.id}'")
            claimed[cell] = spec.id


def scenario_problems(scenario: Scenario) -> List[str]:
    """Validation result as a list of messages; empty when the scenario is valid."""
    try:
        validate_scenario(scenario)
    except ScenarioValidationError as e:
        return [str(e)]
    return []
