#!/usr/bin/env python3
"""
Scenario schema.

Field-level constraints are enforced here by pydantic; cross-field
invariants that need the map (separation, free cells, corridor shape) are
checked by ``scenarios.loader.validate_scenario``.
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from coordination.congestion import CongestionWeights
from planning.grid_map import COMPASS_HEADINGS, GridMap, Pose, normalize_angle


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PoseSpec(_Spec):
    x: float
    y: float
    theta: float = 0.0

    @field_validator("theta", mode="before")
    @classmethod
    def _compass(cls, value):
        if isinstance(value, str):
            key = value.strip().upper()
            if key not in COMPASS_HEADINGS:
                raise ValueError(f"unknown heading '{value}' (use radians or one of {sorted(COMPASS_HEADINGS)})")
            return COMPASS_HEADINGS[key]
        return value

    def to_pose(self) -> Pose:
        return Pose(self.x, self.y, normalize_angle(self.theta))


class PointSpec(_Spec):
    x: float
    y: float

    def to_pose(self) -> Pose:
        return Pose(self.x, self.y, 0.0)


class MapSpec(_Spec):
    resolution: float = Field(1.0, gt=0)
    width: Optional[int] = Field(None, gt=0)
    height: Optional[int] = Field(None, gt=0)
    ascii: Optional[List[str]] = None
    occupied: Optional[List[Tuple[int, int]]] = None

    @model_validator(mode="after")
    def _layout(self) -> "MapSpec":
        if (self.ascii is None) == (self.occupied is None):
            raise ValueError("map needs exactly one of 'ascii' or 'occupied'")
        if self.ascii is not None:
            if not self.ascii or not self.ascii[0]:
                raise ValueError("ascii map is empty")
            widths = {len(row) for row in self.ascii}
            if len(widths) != 1:
                raise ValueError("ascii rows must all have the same length")
            bad = {char for row in self.ascii for char in row} - {".", "#"}
            if bad:
                raise ValueError(f"ascii map may only contain '.' and '#', found {sorted(bad)}")
            width, height = widths.pop(), len(self.ascii)
            if self.width not in (None, width) or self.height not in (None, height):
                raise ValueError(f"width/height do not match the {width}x{height} ascii map")
            self.width, self.height = width, height
        else:
            if self.width is None or self.height is None:
                raise ValueError("an 'occupied' map needs width and height")
            for x, y in self.occupied:
                if not (0 <= x < self.width and 0 <= y < self.height):
                    raise ValueError(f"occupied cell ({x}, {y}) is outside the map")
        return self

    def to_grid_map(self) -> GridMap:
        if self.ascii is not None:
            return GridMap.from_ascii(self.ascii, self.resolution)
        return GridMap.from_cells(self.width, self.height, self.occupied, self.resolution)


class AgentSpec(_Spec):
    id: int = Field(ge=0)
    start: PoseSpec
    goal: PointSpec
    radius: float = Field(0.4, gt=0)


class TaskSpec(_Spec):
    task_id: str
    agent: int
    goal: PointSpec


class CorridorSpec(_Spec):
    id: str
    cells: List[Tuple[int, int]] = Field(min_length=1)


class WeightsSpec(_Spec):
    k_c: float = Field(10.0, ge=0)
    k_g: float = Field(1.0, ge=0)
    k_n: float = Field(2.0, ge=0)
    crowding_factor: float = Field(5.0, gt=0)
    horizon_steps: int = Field(20, gt=0)
    collision_penalty: float = Field(1.0, gt=0)

    def to_weights(self) -> CongestionWeights:
        return CongestionWeights(**self.model_dump())


class ModeFlags(_Spec):
    bvc: bool = True
    congestion: bool = True
    corridors: bool = True


MODES = {
    "full": ModeFlags(bvc=True, congestion=True, corridors=True),
    "baseline": ModeFlags(bvc=False, congestion=False, corridors=False),
    "no-corridors": ModeFlags(bvc=True, congestion=True, corridors=False),
}


class NavigationParams(_Spec):
    weights: WeightsSpec = Field(default_factory=WeightsSpec)
    sensing_radius: Optional[float] = Field(None, gt=0)
    trigger_radius: float = Field(5.0, gt=0)
    nominal_speed: float = Field(1.0, gt=0)
    control_period: float = Field(0.1, gt=0)
    heading_count: Literal[8, 16] = 8
    turn_radius: Optional[float] = Field(None, gt=0)
    seed: int = 0
    step_budget: Optional[int] = Field(None, gt=0)
    modes: ModeFlags = Field(default_factory=ModeFlags)
    epsilon: float = Field(2.0, ge=1)
    initial_schedule: List[float] = Field(default_factory=lambda: [2.0, 1.5, 1.0], min_length=1)
    expansion_budget: int = Field(200_000, gt=0)
    deadlock_window: int = Field(50, gt=0)
    deadlock_delta: Optional[float] = Field(None, gt=0)
    hold_backoff_steps: int = Field(3, ge=0)
    bvc_margin: float = Field(1e-6, ge=0)
    standoff_distance: float = Field(3.0, ge=0)
    switch_margin: float = Field(1.0, ge=0)
    commit_nodes: int = Field(2, ge=0)
    corridor_width_threshold: int = Field(1, ge=1)
    auto_corridors: bool = False

    @field_validator("initial_schedule")
    @classmethod
    def _inflations(cls, value: List[float]) -> List[float]:
        if any(epsilon < 1.0 for epsilon in value):
            raise ValueError("every inflation in initial_schedule must be >= 1")
        return value


class Scenario(_Spec):
    name: str = "scenario"
    map: MapSpec
    agents: List[AgentSpec] = Field(min_length=1)
    tasks: List[TaskSpec] = Field(default_factory=list)
    corridors: List[CorridorSpec] = Field(default_factory=list)
    params: NavigationParams = Field(default_factory=NavigationParams)

    def with_mode(self, mode: str) -> "Scenario":
        if mode not in MODES:
            raise ValueError(f"unknown mode '{mode}' (expected one of {sorted(MODES)})")
        params = self.params.model_copy(update={"modes": MODES[mode].model_copy()})
        return self.model_copy(update={"params": params})

    def with_seed(self, seed: int) -> "Scenario":
        return self.model_copy(update={"params": self.params.model_copy(update={"seed": seed})})

    def sensing_range(self) -> float:
        """Configured sensing radius, or ten times the largest agent radius."""
        return self.params.sensing_radius or 10.0 * max(agent.radius for agent in self.agents)
