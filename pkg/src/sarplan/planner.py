"""Trajectory generation: connect sequenced observation segments with Dubins legs.

Each segment can be flown in one of two directions. Those choices form a layered
graph: stage 0 is the depot, stage i holds the two traversals of the i-th toured
segment, and stage n+1 is the return to the depot. A* picks the direction
assignment that minimizes total path length.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .dubins import DubinsPath3D, Pose, VehicleLimits, dubins_shortest_2d, lift_to_3d, path_end, sample_path
from .segment import FlightSegment, SegmentConfig, segment_accuracy, segment_from_angle, sweep_best_segment
from .terrain import GeoPoint, TerrainGrid
from . import tsp
from .visibility import AltitudeSet, VisibilityMap, visibility_stack

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class Traversal:
    """A segment flown in one direction."""

    segment: FlightSegment
    reverse: bool

    @property
    def entry(self) -> Pose:
        p = self.segment.endpoint_b if self.reverse else self.segment.endpoint_a
        return Pose(p.x, p.y, p.alt, self._heading)

    @property
    def exit(self) -> Pose:
        p = self.segment.endpoint_a if self.reverse else self.segment.endpoint_b
        return Pose(p.x, p.y, p.alt, self._heading)

    @property
    def _heading(self) -> float:
        h = self.segment.heading
        return (h + math.pi) % TWO_PI if self.reverse else h


@dataclass(frozen=True)
class Connector:
    start: Pose
    end: Pose
    path: DubinsPath3D

    @property
    def length(self) -> float:
        return self.path.total_length


def connect(start: Pose, end: Pose, limits: VehicleLimits) -> Connector:
    path2d = dubins_shortest_2d(start, end, limits.min_turn_radius)
    return Connector(start, end, lift_to_3d(path2d, start.alt, end.alt, limits))


def depot_headings(count: int) -> list[float]:
    return [TWO_PI * i / count for i in range(count)]


def _best_depot_connector(depot: GeoPoint, other: Pose, limits, headings, outbound: bool) -> Connector:
    best = None
    for h in headings:
        dp = Pose(depot.x, depot.y, depot.alt, h)
        c = connect(dp, other, limits) if outbound else connect(other, dp, limits)
        if best is None or c.length < best.length:
            best = c
    return best


@dataclass
class LayeredGraph:
    """Stages 0..n+1; ``nodes[k]`` lists traversals of the k-th segment (1..n).

    ``edges[(k, i, j)]`` connects node i of stage k to node j of stage k+1.
    """

    tour_ids: list[int]
    depot: GeoPoint
    nodes: list[list[Optional[Traversal]]]
    edges: dict[tuple[int, int, int], Connector]
    closed: bool = True

    @property
    def n(self) -> int:
        return len(self.tour_ids)

    def node_count(self) -> int:
        return sum(len(stage) for stage in self.nodes)

    def weight(self, k: int, i: int, j: int) -> float:
        return self.edges[(k, i, j)].length

    def segment_length(self, k: int) -> float:
        return self.nodes[k][0].segment.length if 1 <= k <= self.n else 0.0


def build_layer_graph(
    tour_ids: Sequence[int],
    segments: Mapping[int, FlightSegment],
    depot: GeoPoint,
    limits: VehicleLimits = VehicleLimits(),
    n_depot_headings: int = 8,
    closed: bool = True,
    workers: int = 1,
) -> LayeredGraph:
    """Layered direction-choice graph with 3D Dubins edge weights."""
    missing = [t for t in tour_ids if t not in segments]
    if missing:
        raise KeyError(f"no segment for targets {missing}")
    n = len(tour_ids)
    headings = depot_headings(n_depot_headings)
    nodes: list[list[Optional[Traversal]]] = [[None]]
    for tid in tour_ids:
        nodes.append([Traversal(segments[tid], False), Traversal(segments[tid], True)])
    nodes.append([None])

    jobs = []
    for k in range(n + 1):
        for i, src in enumerate(nodes[k]):
            for j, dst in enumerate(nodes[k + 1]):
                jobs.append((k, i, j, src, dst))

    def make(job):
        k, i, j, src, dst = job
        if src is None:
            return _best_depot_connector(depot, dst.entry, limits, headings, outbound=True)
        if dst is None:
            if not closed:
                return Connector(src.exit, src.exit, lift_to_3d(
                    dubins_shortest_2d(src.exit, src.exit, limits.min_turn_radius),
                    src.exit.alt, src.exit.alt, limits))
            return _best_depot_connector(depot, src.exit, limits, headings, outbound=False)
        return connect(src.exit, dst.entry, limits)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            built = list(pool.map(make, jobs))
    else:
        built = [make(job) for job in jobs]
    edges = {(k, i, j): c for (k, i, j, _, _), c in zip(jobs, built)}
    return LayeredGraph(list(tour_ids), depot, nodes, edges, closed)


def tour_heuristic(waypoint_positions: Sequence[Sequence[float]]) -> list[float]:
    """h per stage 0..n+1: straight-line distance through the remaining waypoints."""
    pts = np.asarray(waypoint_positions, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    legs = np.hypot(*(pts[1:] - pts[:-1]).T) if n > 1 else np.zeros(0)
    h = [0.0] * (n + 2)
    for k in range(n, 0, -1):
        h[k] = h[k + 1] + (float(legs[k - 1]) if k <= n - 1 else 0.0)
    h[n + 1] = 0.0
    h[0] = h[1] if n else 0.0
    return h


def cost_to_go(graph: LayeredGraph) -> list[list[float]]:
    """Exact remaining cost from each node (backward recursion over stages)."""
    n = graph.n
    ctg = [[0.0] * len(stage) for stage in graph.nodes]
    for k in range(n, -1, -1):
        for i in range(len(graph.nodes[k])):
            ctg[k][i] = min(
                graph.weight(k, i, j) + graph.segment_length(k) + ctg[k + 1][j]
                for j in range(len(graph.nodes[k + 1]))
            )
    return ctg


@dataclass
class Leg:
    kind: str  # "connector" or "segment"
    target_id: int
    start: Pose
    end: Pose
    length: float
    connector: Optional[Connector] = None
    traversal: Optional[Traversal] = None

    @property
    def altitude(self) -> float:
        return self.end.alt


@dataclass
class SearchAudit:
    expanded: list[tuple[int, int, float, float, float]] = field(default_factory=list)
    overestimates: int = 0
    f_decreases: int = 0


@dataclass
class MissionPlan:
    legs: list[Leg]
    directions: tuple[int, ...]
    total_length: float
    tour_ids: list[int]
    audit: Optional[SearchAudit] = None

    @property
    def segments(self) -> list[Leg]:
        return [leg for leg in self.legs if leg.kind == "segment"]

    @property
    def connectors(self) -> list[Leg]:
        return [leg for leg in self.legs if leg.kind == "connector"]


def plan_length(graph: LayeredGraph, directions: Sequence[int]) -> float:
    """Total length for a direction assignment, summed leg by leg in flight order."""
    path = [0, *directions, 0]
    total = 0.0
    for k in range(graph.n + 1):
        total += graph.segment_length(k) + graph.weight(k, path[k], path[k + 1])
    return total


def assemble_plan(graph: LayeredGraph, directions: Sequence[int], audit=None) -> MissionPlan:
    path = [0, *directions, 0]
    legs: list[Leg] = []
    for k in range(graph.n + 1):
        if k >= 1:
            tr = graph.nodes[k][path[k]]
            legs.append(Leg("segment", graph.tour_ids[k - 1], tr.entry, tr.exit, tr.segment.length, traversal=tr))
        if k == graph.n and not graph.closed:
            break
        c = graph.edges[(k, path[k], path[k + 1])]
        nxt = graph.tour_ids[k] if k < graph.n else 0
        legs.append(Leg("connector", nxt, c.start, c.end, c.length, connector=c))
    return MissionPlan(legs, tuple(directions), plan_length(graph, directions), list(graph.tour_ids), audit)


def astar_plan(graph: LayeredGraph, waypoint_positions, audit: bool = False) -> MissionPlan:
    """A* over (stage, direction) with f = g + h; g counts connectors and segments flown.

    Ties at equal f prefer the lexicographically smaller direction string.
    """
    n = graph.n
    h = tour_heuristic(waypoint_positions)
    ctg = cost_to_go(graph) if audit else None
    rec = SearchAudit() if audit else None
    best_g: dict[tuple[int, int], tuple[float, tuple]] = {(0, 0): (0.0, ())}
    heap = [(h[0], (), 0, 0, 0.0)]
    last_f = -math.inf
    while heap:
        f, dirs, k, i, g = heapq.heappop(heap)
        if best_g.get((k, i)) != (g, dirs):
            continue
        if rec is not None:
            rec.expanded.append((k, i, g, h[k], f))
            if h[k] > ctg[k][i] + 1e-9 * max(1.0, ctg[k][i]):
                rec.overestimates += 1
            if f < last_f - 1e-9 * max(1.0, abs(last_f)):
                rec.f_decreases += 1
            last_f = max(last_f, f)
        if k == n + 1:
            return assemble_plan(graph, dirs[:n], rec)
        for j in range(len(graph.nodes[k + 1])):
            # same association as plan_length so equal plans compare exactly
            g2 = g + (graph.segment_length(k) + graph.weight(k, i, j))
            d2 = dirs + (j,) if k + 1 <= n else dirs
            key = (k + 1, j)
            old = best_g.get(key)
            if old is None or g2 < old[0] or (g2 == old[0] and d2 < old[1]):
                best_g[key] = (g2, d2)
                heapq.heappush(heap, (g2 + h[k + 1], d2, k + 1, j, g2))
    raise RuntimeError("search exhausted without reaching the goal")


def validate_plan(plan: MissionPlan, tol: float = 1e-6) -> list[str]:
    """Problems with continuity, completeness or length bookkeeping (empty if valid)."""
    problems = []
    seg_ids = [leg.target_id for leg in plan.segments]
    if seg_ids != list(plan.tour_ids):
        problems.append(f"segment order {seg_ids} != tour {plan.tour_ids}")
    kinds = [leg.kind for leg in plan.legs]
    if any(a == b for a, b in zip(kinds, kinds[1:])):
        problems.append("legs do not alternate")
    for a, b in zip(plan.legs, plan.legs[1:]):
        gap = math.hypot(a.end.x - b.start.x, a.end.y - b.start.y)
        dh = abs((a.end.heading - b.start.heading + math.pi) % TWO_PI - math.pi)
        if gap > tol or dh > tol or abs(a.end.alt - b.start.alt) > tol:
            problems.append(f"discontinuity between {a.kind} and {b.kind} (gap {gap:.3g} m, dh {dh:.3g})")
    for leg in plan.connectors:
        end = path_end(leg.connector.path, leg.start)
        if math.hypot(end.x - leg.end.x, end.y - leg.end.y) > tol:
            problems.append("connector does not reach its end pose")
    total = sum(leg.length for leg in plan.legs)
    if not math.isclose(total, plan.total_length, rel_tol=1e-9, abs_tol=1e-6):
        problems.append(f"total_length {plan.total_length} != sum of legs {total}")
    return problems


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class PipelineConfig:
    solver: str = "2opt"
    seed: int = 0
    segment: SegmentConfig = SegmentConfig()
    limits: VehicleLimits = VehicleLimits()
    altitudes: AltitudeSet = AltitudeSet()
    extent_half: float = 15_000.0
    resolution: int = 300
    depot_altitude_agl: float = 1000.0
    depot_headings: int = 8
    closed: bool = True
    predictor: str = "sweep"
    workers: int = 1


@dataclass
class PipelineResult:
    plan: MissionPlan
    tour: tsp.Tour
    segments: dict[int, FlightSegment]
    stacks: dict[int, list[VisibilityMap]]
    metrics: dict


def _target_point(grid: TerrainGrid, t: tsp.Target) -> GeoPoint:
    return GeoPoint(t.x, t.y, float(grid.sample(t.x, t.y)))


def predict_segments(grid, targets: tsp.TargetSet, config: PipelineConfig, model=None):
    """Visibility stacks and the chosen segment for every target."""

    def one(t: tsp.Target):
        point = _target_point(grid, t)
        stack = visibility_stack(
            grid, point, config.altitudes, config.extent_half, config.resolution, target_id=t.id
        )
        if config.predictor == "policy":
            from .policy import predict_segment

            seg = predict_segment(model, stack, point, config.segment)
        elif config.predictor == "sweep":
            seg = sweep_best_segment(stack, point, config.segment)
        else:
            raise ValueError(f"unknown predictor {config.predictor!r}")
        return stack, seg

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(one, targets.waypoints))
    else:
        results = [one(t) for t in targets.waypoints]
    stacks = {t.id: r[0] for t, r in zip(targets.waypoints, results)}
    segs = {t.id: r[1] for t, r in zip(targets.waypoints, results)}
    return stacks, segs


def fixed_angle_accuracy(vis: VisibilityMap, target: GeoPoint, alpha: float, config: SegmentConfig) -> float:
    """Accuracy of the segment at a fixed angle on one map (baseline comparison)."""
    return segment_accuracy(vis, segment_from_angle(target, alpha, vis.altitude_agl, config, vis.target_id))


def plan_pipeline(grid: TerrainGrid, targets: tsp.TargetSet, config: PipelineConfig = PipelineConfig(), model=None):
    """Sequence targets, predict one segment each, connect them; returns a PipelineResult."""
    timings = {}
    t0 = time.perf_counter()
    m = tsp.distance_matrix(targets)
    tour = tsp.solve(m, config.solver, config.seed)
    timings["sequencing"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    stacks, segs = predict_segments(grid, targets, config, model)
    timings["segments"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ids = targets.ids
    tour_ids = [ids[i] for i in tour.order]
    depot_ground = float(grid.sample(targets.depot.x, targets.depot.y))
    depot = GeoPoint(targets.depot.x, targets.depot.y, depot_ground + config.depot_altitude_agl)
    graph = build_layer_graph(tour_ids, segs, depot, config.limits, config.depot_headings, config.closed)
    coords = targets.coords()
    plan = astar_plan(graph, [coords[i] for i in tour.order])
    timings["planning"] = time.perf_counter() - t0

    accuracies = {}
    baseline = {}
    by_id = {t.id: t for t in targets.waypoints}
    for tid in tour_ids:
        seg = segs[tid]
        vis = next(v for v in stacks[tid] if v.altitude_agl == seg.altitude_agl)
        accuracies[tid] = segment_accuracy(vis, seg)
        baseline[tid] = fixed_angle_accuracy(vis, _target_point(grid, by_id[tid]), 0.0, config.segment)
    metrics = {
        "n": targets.n,
        "solver": config.solver,
        "seed": config.seed,
        "tour_length_m": tsp.tour_length(m, tour),
        "total_length_m": plan.total_length,
        "per_stage_time_s": timings,
        "accuracy": {str(k): v for k, v in accuracies.items()},
        "mean_accuracy": float(np.mean(list(accuracies.values()))),
        "baseline_mean_accuracy": float(np.mean(list(baseline.values()))),
    }
    return PipelineResult(plan, tour, segs, stacks, metrics)


# ---------------------------------------------------------------------------
# export


def leg_coordinates(leg: Leg, spacing: float = 100.0) -> list[list[float]]:
    if leg.kind == "segment":
        return [[leg.start.x, leg.start.y, leg.start.alt], [leg.end.x, leg.end.y, leg.end.alt]]
    return [[p.x, p.y, p.alt] for p in sample_path(leg.connector.path, leg.start, spacing)]


def plan_to_geojson(plan: MissionPlan, spacing: float = 100.0) -> dict:
    features = []
    for idx, leg in enumerate(plan.legs):
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": leg_coordinates(leg, spacing)},
            "properties": {
                "leg": idx,
                "kind": leg.kind,
                "target_id": leg.target_id,
                "altitude": leg.altitude,
                "length_m": leg.length,
            },
        })
    return {
        "type": "FeatureCollection",
        "properties": {"total_length_m": plan.total_length, "directions": list(plan.directions)},
        "features": features,
    }


def write_plan_geojson(plan: MissionPlan, path, spacing: float = 100.0) -> None:
    with open(path, "w") as fh:
        json.dump(plan_to_geojson(plan, spacing), fh, indent=1)
        fh.write("\n")


def read_plan_geojson(path) -> dict:
    """Parsed FeatureCollection; raises if the layout is not a plan export."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise ValueError(f"{path}: not a FeatureCollection")
    for feat in doc["features"]:
        if feat["properties"]["kind"] not in ("connector", "segment"):
            raise ValueError(f"{path}: unknown leg kind")
    return doc


POSE_CSV_FIELDS = ("leg", "kind", "target_id", "x", "y", "alt", "heading")


def write_poses_csv(plan: MissionPlan, path, spacing: float = 100.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POSE_CSV_FIELDS)
        for idx, leg in enumerate(plan.legs):
            if leg.kind == "segment":
                poses = [leg.start, leg.end]
            else:
                poses = sample_path(leg.connector.path, leg.start, spacing)
            for p in poses:
                w.writerow([idx, leg.kind, leg.target_id, repr(float(p.x)), repr(float(p.y)), repr(float(p.alt)), repr(float(p.heading))])


def read_poses_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {
                "leg": int(r["leg"]),
                "kind": r["kind"],
                "target_id": int(r["target_id"]),
                "x": float(r["x"]),
                "y": float(r["y"]),
                "alt": float(r["alt"]),
                "heading": float(r["heading"]),
            }
            for r in csv.DictReader(fh)
        ]
