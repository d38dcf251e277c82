#!/usr/bin/env python3
"""
Episode metrics.

Success rate follows SR = 1 - DF - CF, where CF counts every collided
agent (collided-and-stuck included) and DF the deadlocked-only agents.
"""

import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict, List

import numpy as np
import pandas as pd

from simulation.world import AgentStatus

logger = logging.getLogger(__name__)


@dataclass
class Metrics:
    agent_count: int
    reached: int
    collided: int
    deadlocked: int
    success_rate: float
    deadlock_fraction: float
    collision_fraction: float
    avg_path_length: float
    per_agent_length: Dict[str, float]
    steps: int
    collision_events: int = 0
    tasks_completed: int = 0
    reservation_denials: int = 0
    shortest_path_avg: float = 0.0
    length_ratio: float = 0.0
    corridor_violations: int = 0
    mode: str = "full"
    scenario: str = ""

    def __post_init__(self):
        for name in ("success_rate", "deadlock_fraction", "collision_fraction"):
            value = getattr(self, name)
            if not -1e-12 <= value <= 1.0 + 1e-12:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if abs(self.success_rate - (1.0 - self.deadlock_fraction - self.collision_fraction)) > 1e-9:
            raise ValueError("success_rate must equal 1 - deadlock_fraction - collision_fraction")

    @property
    def anomalies(self) -> bool:
        return self.success_rate < 1.0 - 1e-12

    def to_dict(self) -> Dict:
        return asdict(self)


def fractions(agent_count: int, collided: int, deadlocked: int) -> Dict[str, float]:
    if agent_count <= 0:
        return {"success_rate": 1.0, "deadlock_fraction": 0.0, "collision_fraction": 0.0}
    cf = collided / agent_count
    df = deadlocked / agent_count
    return {"success_rate": 1.0 - df - cf, "deadlock_fraction": df, "collision_fraction": cf}


def compute_metrics(world, mode: str = "full") -> Metrics:
    """Metrics of a world at (or during) an episode; active agents count toward success."""
    agents = world.ordered_agents()
    collided = sum(1 for a in agents if a.status is AgentStatus.COLLIDED)
    deadlocked = sum(1 for a in agents if a.status is AgentStatus.DEADLOCKED)
    reached = [a for a in agents if a.status is AgentStatus.REACHED]

    avg_length = float(np.mean([a.traveled for a in reached])) if reached else 0.0
    shortest = float(np.mean([a.shortest_length for a in reached])) if reached else 0.0
    ratio = avg_length / shortest if shortest > 0 else 0.0

    return Metrics(
        agent_count=len(agents),
        reached=len(reached),
        collided=collided,
        deadlocked=deadlocked,
        **fractions(len(agents), collided, deadlocked),
        avg_path_length=avg_length,
        per_agent_length={str(a.id): a.traveled for a in agents},
        steps=world.step,
        collision_events=world.collision_events,
        tasks_completed=sum(a.tasks_completed for a in agents),
        reservation_denials=world.table.denials if world.table is not None else 0,
        shortest_path_avg=shortest,
        length_ratio=ratio,
        corridor_violations=world.corridor_violations,
        mode=mode,
        scenario=world.scenario.name,
    )


@dataclass
class StepSample:
    step: int
    time: float
    active: int
    reached: int
    collided: int
    deadlocked: int
    moved: int
    held: int
    min_separation: float


class MetricsCollector:
    """Per-step samples of an episode, exportable as a DataFrame."""

    def __init__(self):
        self.samples: List[StepSample] = []

    def record(self, sample: StepSample) -> None:
        self.samples.append(sample)
        if sample.min_separation < 0:
            logger.warning(f"Step {sample.step}: negative clearance {sample.min_separation:.3f}")

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(sample) for sample in self.samples],
                            columns=[f.name for f in fields(StepSample)])

    def summary(self) -> Dict[str, float]:
        if not self.samples:
            return {"steps": 0, "min_separation": float("inf"), "held_fraction": 0.0}
        frame = self.to_dataframe()
        decisions = frame["moved"].sum() + frame["held"].sum()
        return {
            "steps": int(frame["step"].max()),
            "min_separation": float(frame["min_separation"].min()),
            "held_fraction": float(frame["held"].sum() / decisions) if decisions else 0.0,
        }


def min_clearance(positions: Dict[int, tuple], radii: Dict[int, float]) -> float:
    """Smallest ||p_i - p_j|| - R_i - R_j over pairs; ``inf`` with fewer than two agents."""
    ids = sorted(positions)
    if len(ids) < 2:
        return float("inf")
    points = np.array([positions[i] for i in ids], dtype=float)
    radius = np.array([radii[i] for i in ids], dtype=float)
    distance = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    gap = distance - radius[:, None] - radius[None, :]
    upper = np.triu_indices(len(ids), k=1)
    return float(gap[upper].min())
