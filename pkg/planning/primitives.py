#!/usr/bin/env python3
"""
Unicycle motion primitives for the state lattice.

Primitives are built for the headings of the first quadrant and rotated by
quarter turns, which keeps integer end offsets exact. Every primitive is a
chain of constant-curvature segments sampled at ``sample_step`` or finer.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from planning.errors import InvalidParameterError
from planning.grid_map import Pose, heading_to_angle, normalize_angle

logger = logging.getLogger(__name__)

SUPPORTED_HEADING_COUNTS = (8, 16)
MAX_OFFSET_CELLS = 3
ROTATION_COST_FACTOR = 0.5
SPLIT_FRACTIONS = tuple(k / 8 for k in range(1, 8))
PRIMITIVE_KINDS = ("forward", "arc_left", "arc_right", "rotate_left", "rotate_right")

# (turn angle, arc length); a zero turn is a straight segment
Segment = Tuple[float, float]


@dataclass(frozen=True)
class MotionPrimitive:
    kind: str
    start_heading: int
    end_heading: int
    end_offset: Tuple[int, int]
    sweep: Tuple[Pose, ...]
    cost: float

    @property
    def is_rotation(self) -> bool:
        return self.end_offset == (0, 0)


class PrimitiveSet:
    """Primitives grouped by start heading, in construction order."""

    def __init__(self, primitives: Sequence[MotionPrimitive], heading_count: int,
                 resolution: float, turn_radius: float, sample_step: float):
        self.heading_count = heading_count
        self.resolution = resolution
        self.turn_radius = turn_radius
        self.sample_step = sample_step
        by_heading: Dict[int, List[MotionPrimitive]] = {h: [] for h in range(heading_count)}
        for primitive in primitives:
            by_heading[primitive.start_heading].append(primitive)
        self._by_heading = {h: tuple(prims) for h, prims in by_heading.items()}

    def for_heading(self, heading: int) -> Tuple[MotionPrimitive, ...]:
        return self._by_heading[heading % self.heading_count]

    @property
    def per_heading(self) -> int:
        return len(self._by_heading[0])

    def max_hop(self) -> float:
        """Largest distance between consecutive sweep points over all primitives."""
        longest = 0.0
        for primitive in self:
            for a, b in zip(primitive.sweep, primitive.sweep[1:]):
                longest = max(longest, a.distance_to(b))
        return longest

    def __iter__(self) -> Iterator[MotionPrimitive]:
        for heading in range(self.heading_count):
            yield from self._by_heading[heading]

    def __len__(self) -> int:
        return sum(len(prims) for prims in self._by_heading.values())


def _chord(phi0: float, beta: float) -> Tuple[float, float]:
    """Displacement per unit arc length of an arc starting at phi0 and turning beta."""
    if abs(beta) < 1e-12:
        return (math.cos(phi0), math.sin(phi0))
    return ((math.sin(phi0 + beta) - math.sin(phi0)) / beta,
            (math.cos(phi0) - math.cos(phi0 + beta)) / beta)


def _arc_point(x0: float, y0: float, phi0: float, beta: float, length: float,
               s: float) -> Tuple[float, float, float]:
    if abs(beta) < 1e-12:
        return (x0 + s * math.cos(phi0), y0 + s * math.sin(phi0), phi0)
    rho = length / beta
    phi = phi0 + beta * s / length
    return (x0 + rho * (math.sin(phi) - math.sin(phi0)),
            y0 + rho * (math.cos(phi0) - math.cos(phi)), phi)


def _sample(phi0: float, segments: Sequence[Segment], end_pose: Pose, step: float) -> Tuple[Pose, ...]:
    poses = [Pose(0.0, 0.0, normalize_angle(phi0))]
    x, y, phi = 0.0, 0.0, phi0
    for beta, length in segments:
        pieces = max(1, int(math.ceil(length / step - 1e-9)))
        for k in range(1, pieces + 1):
            px, py, pphi = _arc_point(x, y, phi, beta, length, length * k / pieces)
            poses.append(Pose(px, py, normalize_angle(pphi)))
        x, y, phi = _arc_point(x, y, phi, beta, length, length)
    poses[-1] = end_pose
    return tuple(poses)


def _solve_two_arcs(phi0: float, beta1: float, beta2: float,
                    target: Tuple[float, float]) -> Optional[Tuple[float, float]]:
    g1x, g1y = _chord(phi0, beta1)
    g2x, g2y = _chord(phi0 + beta1, beta2)
    det = g1x * g2y - g2x * g1y
    if abs(det) < 1e-12:
        return None
    tx, ty = target
    return ((tx * g2y - g2x * ty) / det, (g1x * ty - tx * g1y) / det)


def _forward_segments(phi: float, resolution: float,
                      turn_radius: float) -> Tuple[Tuple[int, int], List[Segment]]:
    """Straight move when the heading is grid-aligned, otherwise a symmetric S-curve."""
    offsets = [(dx, dy) for dx in range(MAX_OFFSET_CELLS + 1)
               for dy in range(MAX_OFFSET_CELLS + 1) if (dx, dy) != (0, 0)]
    offsets.sort(key=lambda o: (round(abs(math.atan2(o[1], o[0]) - phi), 9), math.hypot(*o), o))
    for dx, dy in offsets:
        chord_length = math.hypot(dx, dy) * resolution
        delta = 2.0 * (math.atan2(dy, dx) - phi)
        if abs(delta) < 1e-9:
            return (dx, dy), [(0.0, chord_length)]
        half = 0.5 * chord_length * abs(delta) / (2.0 * math.sin(abs(delta) / 2.0))
        if half / abs(delta) >= turn_radius - 1e-9:
            return (dx, dy), [(delta, half), (-delta, half)]
    raise InvalidParameterError(f"no forward motion reachable for heading angle {phi:.4f}")


def _turn_segments(phi: float, turn: float, resolution: float,
                   turn_radius: float) -> Tuple[Tuple[int, int], List[Segment]]:
    """Shortest two-arc motion that changes heading by ``turn`` and ends on a cell center."""
    best = None
    for dx in range(-MAX_OFFSET_CELLS, MAX_OFFSET_CELLS + 1):
        for dy in range(-MAX_OFFSET_CELLS, MAX_OFFSET_CELLS + 1):
            if (dx, dy) == (0, 0):
                continue
            for fraction in SPLIT_FRACTIONS:
                beta1 = fraction * turn
                beta2 = turn - beta1
                lengths = _solve_two_arcs(phi, beta1, beta2, (dx * resolution, dy * resolution))
                if lengths is None:
                    continue
                l1, l2 = lengths
                if l1 <= 1e-9 or l2 <= 1e-9:
                    continue
                if l1 / abs(beta1) < turn_radius - 1e-9 or l2 / abs(beta2) < turn_radius - 1e-9:
                    continue
                key = (round(l1 + l2, 9), abs(dx) + abs(dy), dx, dy, fraction)
                if best is None or key < best[0]:
                    best = (key, (dx, dy), [(beta1, l1), (beta2, l2)])
    if best is None:
        raise InvalidParameterError(
            f"turn radius {turn_radius} cannot reach the adjacent heading within "
            f"{MAX_OFFSET_CELLS} cells")
    return best[1], best[2]


def _base_primitives(quarter_index: int, heading_count: int, turn_radius: float,
                     resolution: float, sample_step: float) -> List[MotionPrimitive]:
    phi = heading_to_angle(quarter_index, heading_count)
    step_angle = 2.0 * math.pi / heading_count
    primitives = []

    offset, segments = _forward_segments(phi, resolution, turn_radius)
    end = Pose(offset[0] * resolution, offset[1] * resolution, phi)
    primitives.append(MotionPrimitive("forward", quarter_index, quarter_index, offset,
                                      _sample(phi, segments, end, sample_step),
                                      sum(length for _, length in segments)))

    for kind, sign in (("arc_left", 1), ("arc_right", -1)):
        end_heading = (quarter_index + sign) % heading_count
        offset, segments = _turn_segments(phi, sign * step_angle, resolution, turn_radius)
        end = Pose(offset[0] * resolution, offset[1] * resolution,
                   heading_to_angle(end_heading, heading_count))
        primitives.append(MotionPrimitive(kind, quarter_index, end_heading, offset,
                                          _sample(phi, segments, end, sample_step),
                                          sum(length for _, length in segments)))

    for kind, sign in (("rotate_left", 1), ("rotate_right", -1)):
        end_heading = (quarter_index + sign) % heading_count
        sweep = (Pose(0.0, 0.0, phi),
                 Pose(0.0, 0.0, normalize_angle(phi + sign * step_angle / 2.0)),
                 Pose(0.0, 0.0, heading_to_angle(end_heading, heading_count)))
        primitives.append(MotionPrimitive(kind, quarter_index, end_heading, (0, 0), sweep,
                                          ROTATION_COST_FACTOR * resolution))
    return primitives


def _rotate_quarter(primitive: MotionPrimitive, quarters: int, heading_count: int,
                    resolution: float) -> MotionPrimitive:
    shift = quarters * heading_count // 4

    def turn(x: float, y: float) -> Tuple[float, float]:
        for _ in range(quarters):
            x, y = -y, x
        return x, y

    start_heading = (primitive.start_heading + shift) % heading_count
    end_heading = (primitive.end_heading + shift) % heading_count
    dx, dy = turn(*primitive.end_offset)
    dx, dy = int(round(dx)), int(round(dy))
    sweep = [Pose(*turn(p.x, p.y), normalize_angle(p.theta + quarters * math.pi / 2.0))
             for p in primitive.sweep]
    sweep[0] = Pose(0.0, 0.0, heading_to_angle(start_heading, heading_count))
    sweep[-1] = Pose(dx * resolution, dy * resolution, heading_to_angle(end_heading, heading_count))
    return MotionPrimitive(primitive.kind, start_heading, end_heading, (dx, dy), tuple(sweep),
                           primitive.cost)


def build_primitives(heading_count: int = 8, turn_radius: float = 1.0, resolution: float = 1.0,
                     sample_step: Optional[float] = None) -> PrimitiveSet:
    """
    Build the lattice motion primitives.

    Args:
        heading_count: number of uniformly spaced headings (8 or 16)
        turn_radius: minimum turning radius in meters, at least one cell
        resolution: cell size in meters
        sample_step: sweep sampling step, defaults to half a cell

    Returns:
        PrimitiveSet with forward, arc-left, arc-right and two in-place
        rotations per heading, in that order

    Raises:
        InvalidParameterError: unsupported heading count, radius below one
            cell, or a radius too large to reach the adjacent heading
    """
    if heading_count not in SUPPORTED_HEADING_COUNTS:
        raise InvalidParameterError(f"heading_count must be one of {SUPPORTED_HEADING_COUNTS}")
    if resolution <= 0:
        raise InvalidParameterError("resolution must be positive")
    if turn_radius < resolution:
        raise InvalidParameterError("turn_radius must be at least one cell")
    sample_step = resolution / 2.0 if sample_step is None else min(sample_step, resolution / 2.0)
    if sample_step <= 0:
        raise InvalidParameterError("sample_step must be positive")

    quarter = heading_count // 4
    base = []
    for index in range(quarter):
        base.extend(_base_primitives(index, heading_count, turn_radius, resolution, sample_step))

    by_heading: Dict[int, List[MotionPrimitive]] = {}
    for quarters in range(4):
        for primitive in base:
            rotated = primitive if quarters == 0 else _rotate_quarter(primitive, quarters, heading_count,
                                                                      resolution)
            by_heading.setdefault(rotated.start_heading, []).append(rotated)

    ordered = [p for heading in range(heading_count) for p in by_heading[heading]]
    logger.debug(f"Built {len(ordered)} primitives for {heading_count} headings "
                 f"(turn radius {turn_radius}, sample step {sample_step:.3f})")
    return PrimitiveSet(ordered, heading_count, resolution, turn_radius, sample_step)


def format_primitives(primitives: PrimitiveSet) -> str:
    """
    Serialize a primitive set, one record per line:
    ``kind start end dx dy cost n x,y,theta;...``
    """
    lines = [f"# heading_count={primitives.heading_count} resolution={primitives.resolution:.9f} "
             f"turn_radius={primitives.turn_radius:.9f} sample_step={primitives.sample_step:.9f}"]
    for p in primitives:
        sweep = ";".join(f"{pose.x:.9f},{pose.y:.9f},{pose.theta:.9f}" for pose in p.sweep)
        lines.append(f"{p.kind} {p.start_heading} {p.end_heading} {p.end_offset[0]} {p.end_offset[1]} "
                     f"{p.cost:.9f} {len(p.sweep)} {sweep}")
    return "\n".join(lines) + "\n"


def parse_primitives(text: str) -> PrimitiveSet:
    header: Dict[str, float] = {}
    primitives = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                key, _, value = token.partition("=")
                header[key] = float(value)
            continue
        fields = line.split(" ")
        if len(fields) != 8:
            raise ValueError(f"line {line_number}: expected 8 fields, got {len(fields)}")
        kind, start, end, dx, dy, cost, count, sweep_text = fields
        sweep = tuple(Pose(*(float(v) for v in point.split(","))) for point in sweep_text.split(";"))
        if len(sweep) != int(count):
            raise ValueError(f"line {line_number}: sweep has {len(sweep)} points, expected {count}")
        primitives.append(MotionPrimitive(kind, int(start), int(end), (int(dx), int(dy)), sweep,
                                          float(cost)))
    return PrimitiveSet(primitives, int(header.get("heading_count", 8)),
                        header.get("resolution", 1.0), header.get("turn_radius", 1.0),
                        header.get("sample_step", 0.5))
