"""Straight observation legs tangent to a target's standoff circle.

A segment at angle ``alpha`` touches the circle of radius ``standoff_radius``
at ``target + R (cos alpha, sin alpha)``. The segment's midpoint is that tangent point,
and its direction is perpendicular to the radius.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .terrain import GeoPoint
from .visibility import VisibilityMap

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class SegmentConfig:
    standoff_radius: float = 1500.0
    speed: float = 100.0
    observation_time: float = 30.0
    angle_step: float = math.pi / 180

    def __post_init__(self):
        if not (self.standoff_radius > 0 and self.speed > 0 and self.observation_time > 0):
            raise ValueError("standoff_radius, speed and observation_time must be positive")
        if not 0 < self.angle_step <= math.pi / 18 + 1e-15:
            raise ValueError("angle_step must lie in (0, pi/18]")

    @property
    def length(self) -> float:
        return self.speed * self.observation_time

    def angles(self) -> list[float]:
        """Sweep grid {0, step, 2 step, ...} below 2 pi."""
        count = math.ceil(TWO_PI / self.angle_step - 1e-9)
        return [k * self.angle_step for k in range(count)]


@dataclass(frozen=True)
class FlightSegment:
    target_id: int
    angle_alpha: float
    altitude_agl: float
    endpoint_a: GeoPoint
    endpoint_b: GeoPoint
    length: float

    @property
    def heading(self) -> float:
        """Direction of travel from endpoint_a to endpoint_b."""
        return (self.angle_alpha + math.pi / 2) % TWO_PI

    @property
    def midpoint(self) -> tuple[float, float]:
        return (
            (self.endpoint_a.x + self.endpoint_b.x) / 2,
            (self.endpoint_a.y + self.endpoint_b.y) / 2,
        )


def segment_from_angle(
    target: GeoPoint,
    alpha: float,
    altitude_agl: float,
    config: SegmentConfig = SegmentConfig(),
    target_id: int = 0,
) -> FlightSegment:
    """Segment tangent at ``alpha``; endpoints carry absolute altitude target.alt + AGL."""
    if not altitude_agl > 0:
        raise ValueError(f"altitude must be positive, got {altitude_agl}")
    if not 0 <= alpha < TWO_PI:
        raise ValueError(f"alpha must lie in [0, 2pi), got {alpha}")
    c, s = math.cos(alpha), math.sin(alpha)
    mx = target.x + config.standoff_radius * c
    my = target.y + config.standoff_radius * s
    half = config.length / 2
    alt = target.alt + altitude_agl
    a = GeoPoint(mx + half * s, my - half * c, alt)
    b = GeoPoint(mx - half * s, my + half * c, alt)
    return FlightSegment(target_id, alpha, float(altitude_agl), a, b, config.length)


def sample_count(length: float, spacing: float) -> int:
    return math.ceil(length / spacing - 1e-9) + 1


def _sample_xy(ax, ay, bx, by, length: float, spacing: float):
    """Evenly spaced points from a to b inclusive; broadcasts over leading axes."""
    n = sample_count(length, spacing)
    t = np.arange(n) / (n - 1)
    ax, ay, bx, by = (np.asarray(v, dtype=np.float64)[..., None] for v in (ax, ay, bx, by))
    return ax + t * (bx - ax), ay + t * (by - ay)


def _check_match(vis: VisibilityMap, seg: FlightSegment) -> None:
    if vis.target_id != seg.target_id:
        raise ValueError(f"map target {vis.target_id} != segment target {seg.target_id}")
    if vis.altitude_agl != seg.altitude_agl:
        raise ValueError(f"map altitude {vis.altitude_agl} != segment altitude {seg.altitude_agl}")


def segment_reward(vis: VisibilityMap, seg: FlightSegment) -> int:
    """Count of visible sample points along the segment at the map's cell spacing."""
    _check_match(vis, seg)
    a, b = seg.endpoint_a, seg.endpoint_b
    xs, ys = _sample_xy(a.x, a.y, b.x, b.y, seg.length, vis.cell_size)
    return int(vis.lookup(xs, ys).sum())


def segment_accuracy(vis: VisibilityMap, seg: FlightSegment) -> float:
    """Fraction of segment sample points with a clear line of sight."""
    return segment_reward(vis, seg) / sample_count(seg.length, vis.cell_size)


def reward_table(
    stack: Sequence[VisibilityMap],
    target: GeoPoint,
    config: SegmentConfig = SegmentConfig(),
) -> tuple[list[float], np.ndarray]:
    """Rewards for every (altitude, alpha) on the sweep grid; shape (n_alt, n_alpha)."""
    alphas = config.angles()
    table = np.zeros((len(stack), len(alphas)), dtype=np.int64)
    for i, vis in enumerate(stack):
        segs = [segment_from_angle(target, a, vis.altitude_agl, config, vis.target_id) for a in alphas]
        ax = [s.endpoint_a.x for s in segs]
        ay = [s.endpoint_a.y for s in segs]
        bx = [s.endpoint_b.x for s in segs]
        by = [s.endpoint_b.y for s in segs]
        xs, ys = _sample_xy(ax, ay, bx, by, config.length, vis.cell_size)
        table[i] = vis.lookup(xs, ys).sum(axis=1)
    return alphas, table


def select_best(alphas: Sequence[float], table: np.ndarray) -> tuple[int, int]:
    """(altitude index, alpha index) of the lowest altitude reaching the global max,
    smallest alpha among ties."""
    best = table.max()
    alt_idx = int(np.flatnonzero(table.max(axis=1) == best)[0])
    alpha_idx = int(np.flatnonzero(table[alt_idx] == best)[0])
    return alt_idx, alpha_idx


def sweep_best_segment(
    stack: Sequence[VisibilityMap],
    target: GeoPoint,
    config: SegmentConfig = SegmentConfig(),
) -> FlightSegment:
    """Exhaustive (alpha x altitude) search for the best observation segment."""
    if not stack:
        raise ValueError("empty visibility stack")
    alts = [v.altitude_agl for v in stack]
    if any(b <= a for a, b in zip(alts, alts[1:])):
        raise ValueError("stack altitudes must be strictly increasing")
    alphas, table = reward_table(stack, target, config)
    i, j = select_best(alphas, table)
    return segment_from_angle(target, alphas[j], alts[i], config, stack[i].target_id)


SEGMENT_CSV_FIELDS = ("target_id", "alpha_deg", "altitude_m", "ax", "ay", "bx", "by", "reward", "accuracy")


def write_segments_csv(rows: Iterable[tuple[FlightSegment, int, float]], path) -> None:
    """Rows of (segment, reward, accuracy)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SEGMENT_CSV_FIELDS)
        for seg, reward, acc in rows:
            w.writerow([
                seg.target_id,
                repr(float(math.degrees(seg.angle_alpha))),
                repr(float(seg.altitude_agl)),
                repr(float(seg.endpoint_a.x)),
                repr(float(seg.endpoint_a.y)),
                repr(float(seg.endpoint_b.x)),
                repr(float(seg.endpoint_b.y)),
                reward,
                repr(float(acc)),
            ])


def read_segments_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({
                "target_id": int(row["target_id"]),
                "alpha_deg": float(row["alpha_deg"]),
                "altitude_m": float(row["altitude_m"]),
                "ax": float(row["ax"]),
                "ay": float(row["ay"]),
                "bx": float(row["bx"]),
                "by": float(row["by"]),
                "reward": int(row["reward"]),
                "accuracy": float(row["accuracy"]),
            })
    return out
