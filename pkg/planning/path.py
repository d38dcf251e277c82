#!/usr/bin/env python3
"""
Paths on the lattice.

A path holds the dense waypoint sequence (primitive sweeps placed on their
start nodes and concatenated), the cumulative cost at every waypoint, and
the waypoint indices that are lattice nodes.
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from planning.errors import NotOnPathError
from planning.grid_map import LatticeNode, Pose, angle_difference
from planning.primitives import MotionPrimitive


@dataclass(frozen=True)
class Path:
    poses: Tuple[Pose, ...]
    cumulative: Tuple[float, ...]
    node_indices: Tuple[int, ...] = ()
    nodes: Tuple[LatticeNode, ...] = ()
    primitives: Tuple[MotionPrimitive, ...] = ()
    resolution: float = 1.0

    @property
    def length(self) -> float:
        return self.cumulative[-1] - self.cumulative[0]

    @property
    def start(self) -> Pose:
        return self.poses[0]

    @property
    def end(self) -> Pose:
        return self.poses[-1]

    @property
    def last_index(self) -> int:
        return len(self.poses) - 1

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([[p.x, p.y] for p in self.poses], dtype=float)

    @cached_property
    def key(self) -> Tuple[Tuple[float, float, float], ...]:
        """Rounded pose sequence, used to detect duplicate candidates."""
        return tuple((round(p.x, 9), round(p.y, 9), round(p.theta, 9)) for p in self.poses)

    @classmethod
    def empty(cls, node: LatticeNode, pose: Pose, resolution: float) -> "Path":
        return cls((pose,), (0.0,), (0,), (node,), (), resolution)

    @classmethod
    def from_steps(cls, start: LatticeNode, start_pose: Pose,
                   steps: Sequence[Tuple[LatticeNode, MotionPrimitive]], resolution: float,
                   node_pose=None) -> "Path":
        """
        Place a chain of primitives starting at ``start``.

        ``node_pose`` maps a node to its exact pose; end waypoints of every
        primitive are snapped to it.
        """
        poses: List[Pose] = [start_pose]
        cumulative: List[float] = [0.0]
        node_indices = [0]
        nodes = [start]
        primitives = []
        origin_x, origin_y = start_pose.x, start_pose.y
        total = 0.0
        for node, primitive in steps:
            sweep = primitive.sweep
            chord = [0.0]
            for a, b in zip(sweep, sweep[1:]):
                chord.append(chord[-1] + a.distance_to(b))
            for k in range(1, len(sweep)):
                fraction = chord[k] / chord[-1] if chord[-1] > 0 else k / (len(sweep) - 1)
                cumulative.append(total + primitive.cost * fraction)
                if k == len(sweep) - 1:
                    poses.append(node_pose(node) if node_pose else
                                 Pose(origin_x + sweep[k].x, origin_y + sweep[k].y, sweep[k].theta))
                else:
                    poses.append(Pose(origin_x + sweep[k].x, origin_y + sweep[k].y, sweep[k].theta))
            total += primitive.cost
            cumulative[-1] = total
            node_indices.append(len(poses) - 1)
            nodes.append(node)
            primitives.append(primitive)
            origin_x, origin_y = poses[-1].x, poses[-1].y
        return cls(tuple(poses), tuple(cumulative), tuple(node_indices), tuple(nodes),
                   tuple(primitives), resolution)

    @classmethod
    def from_poses(cls, poses: Sequence[Pose], resolution: float = 1.0) -> "Path":
        """Free-form path through raw poses; cumulative cost is the polyline length."""
        cumulative = [0.0]
        for a, b in zip(poses, poses[1:]):
            cumulative.append(cumulative[-1] + a.distance_to(b))
        return cls(tuple(poses), tuple(cumulative), (), (), (), resolution)

    def is_node_index(self, index: int) -> bool:
        return index in self.node_indices

    def node_at_index(self, index: int) -> Optional[LatticeNode]:
        for node_index, node in zip(self.node_indices, self.nodes):
            if node_index == index:
                return node
        return None

    def next_node_index(self, index: int) -> Optional[int]:
        for node_index in self.node_indices:
            if node_index >= index:
                return node_index
        return None

    def previous_node_index(self, index: int) -> Optional[int]:
        found = None
        for node_index in self.node_indices:
            if node_index <= index:
                found = node_index
        return found

    def suffix(self, index: int) -> "Path":
        """Sub-path from waypoint ``index`` to the end; cumulative restarts at zero."""
        if not 0 <= index < len(self.poses):
            raise IndexError(f"waypoint index {index} out of range")
        if index == 0:
            return self
        offset = self.cumulative[index]
        kept = [(i - index, node) for i, node in zip(self.node_indices, self.nodes) if i >= index]
        first_kept = self.node_indices.index(kept[0][0] + index) if kept else len(self.node_indices)
        return Path(self.poses[index:], tuple(c - offset for c in self.cumulative[index:]),
                    tuple(i for i, _ in kept), tuple(node for _, node in kept),
                    self.primitives[first_kept:] if self.primitives else (), self.resolution)

    def prefix(self, index: int) -> "Path":
        """Sub-path from the first waypoint up to and including waypoint ``index``."""
        kept = [(i, node) for i, node in zip(self.node_indices, self.nodes) if i <= index]
        primitive_count = max(len(kept) - 1, 0)
        return Path(self.poses[:index + 1], self.cumulative[:index + 1],
                    tuple(i for i, _ in kept), tuple(node for _, node in kept),
                    self.primitives[:primitive_count], self.resolution)

    def concat(self, tail: "Path") -> "Path":
        """Append ``tail``, whose first pose must coincide with this path's last pose."""
        if self.end.distance_to(tail.start) > self.resolution / 10.0:
            raise NotOnPathError("tail does not start where the path ends")
        offset = self.cumulative[-1] - tail.cumulative[0]
        shift = len(self.poses) - 1
        node_indices = list(self.node_indices)
        nodes = list(self.nodes)
        for i, node in zip(tail.node_indices, tail.nodes):
            if i == 0 and node_indices and node_indices[-1] == shift:
                continue
            node_indices.append(i + shift)
            nodes.append(node)
        return Path(self.poses + tail.poses[1:],
                    self.cumulative + tuple(c + offset for c in tail.cumulative[1:]),
                    tuple(node_indices), tuple(nodes), self.primitives + tail.primitives,
                    self.resolution)

    def index_of(self, pose: Pose, tolerance: Optional[float] = None) -> int:
        """
        Index of the waypoint matching ``pose``: a position match within one
        tenth of a cell, preferring an exact heading match.

        Raises:
            NotOnPathError: if no waypoint matches
        """
        tolerance = self.resolution / 10.0 if tolerance is None else tolerance
        first = None
        for index, candidate in enumerate(self.poses):
            if math.hypot(candidate.x - pose.x, candidate.y - pose.y) > tolerance:
                continue
            if angle_difference(candidate.theta, pose.theta) < 1e-6:
                return index
            if first is None:
                first = index
        if first is None:
            raise NotOnPathError(f"pose ({pose.x:.3f}, {pose.y:.3f}) is not on the path")
        return first


def suffix_from(path: Path, position: Pose) -> Path:
    """Sub-path from the pose matching ``position`` to the goal."""
    return path.suffix(path.index_of(position))
