#!/usr/bin/env python3
"""
Episode output files.

trajectory.csv   step,agent_id,x,y,theta,status   (floats with 6 decimals)
reservations.csv time,agent_id,corridor_id,direction,decision,start_time,end_time
metrics.json     sorted keys, 2-space indent, floats rounded to 6 decimals

Rows are written in (step, agent_id) order and every float goes through the
same formatter, so identical episodes produce identical bytes.
"""

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Tuple, Union

import pandas as pd

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ("step", "agent_id", "x", "y", "theta", "status")
RESERVATION_HEADER = ("time", "agent_id", "corridor_id", "direction", "decision", "start_time", "end_time")
FLOAT_DIGITS = 6

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    text = f"{value:.{FLOAT_DIGITS}f}"
    return "0.000000" if text == "-0.000000" else text


def round_floats(value, digits: int = FLOAT_DIGITS):
    """Recursively round floats for JSON output; -0.0 becomes 0.0."""
    if isinstance(value, float):
        return round(value, digits) + 0.0
    if isinstance(value, dict):
        return {key: round_floats(item, digits) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(item, digits) for item in value]
    return value


@dataclass(frozen=True)
class TrajectoryRecord:
    step: int
    agent_id: int
    x: float
    y: float
    theta: float
    status: str

    def to_row(self) -> List[str]:
        return [str(self.step), str(self.agent_id), format_float(self.x), format_float(self.y),
                format_float(self.theta), self.status]


class TrajectoryLog:
    """Per-step agent poses; each agent appears every step until its terminal status."""

    def __init__(self, records: Iterable[TrajectoryRecord] = ()):
        self.records: List[TrajectoryRecord] = list(records)

    def append(self, record: TrajectoryRecord) -> None:
        self.records.append(record)

    def record_agents(self, step: int, agents: Iterable) -> None:
        for agent in sorted(agents, key=lambda a: a.id):
            self.append(TrajectoryRecord(step, agent.id, agent.pose.x, agent.pose.y, agent.pose.theta,
                                         agent.status.value))

    def agent_ids(self) -> List[int]:
        return sorted({record.agent_id for record in self.records})

    def for_agent(self, agent_id: int) -> List[TrajectoryRecord]:
        return [record for record in self.records if record.agent_id == agent_id]

    def polylines(self) -> Dict[int, List[Tuple[float, float]]]:
        lines: Dict[int, List[Tuple[float, float]]] = {}
        for record in self.records:
            points = lines.setdefault(record.agent_id, [])
            if not points or points[-1] != (record.x, record.y):
                points.append((record.x, record.y))
        return lines

    def final_records(self) -> Dict[int, TrajectoryRecord]:
        final: Dict[int, TrajectoryRecord] = {}
        for record in self.records:
            final[record.agent_id] = record
        return final

    def is_contiguous(self) -> bool:
        """Steps per agent run 0, 1, 2, ... and stop at the first terminal status."""
        for agent_id in self.agent_ids():
            records = self.for_agent(agent_id)
            for expected, record in enumerate(records):
                if record.step != expected:
                    return False
            if any(record.status != "active" for record in records[:-1]):
                return False
        return True

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TrajectoryRecord]:
        return iter(self.records)


def write_trajectory_csv(log: TrajectoryLog, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records = sorted(log.records, key=lambda r: (r.step, r.agent_id))
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        writer.writerows(record.to_row() for record in records)
    logger.info(f"Wrote {len(records)} trajectory records to {path}")
    return path


def read_trajectory_csv(path: PathLike) -> TrajectoryLog:
    """
    Raises:
        ValueError: the header is not the trajectory header
    """
    frame = pd.read_csv(path, dtype={"step": int, "agent_id": int, "status": str})
    if tuple(frame.columns) != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: expected header {','.join(TRAJECTORY_HEADER)}")
    return TrajectoryLog(TrajectoryRecord(int(row.step), int(row.agent_id), float(row.x), float(row.y),
                                          float(row.theta), str(row.status))
                         for row in frame.itertuples(index=False))


def write_reservation_csv(events: Iterable, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESERVATION_HEADER)
        for event in events:
            writer.writerow([format_float(event.time), str(event.agent_id), event.corridor_id, event.direction,
                             event.decision, format_float(event.start_time), format_float(event.end_time)])
    return path


def write_metrics_json(metrics, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = round_floats(metrics.to_dict())
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
