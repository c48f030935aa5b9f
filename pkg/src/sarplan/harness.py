"""Scenario generation and benchmark runs over TSP solvers and the full planner.

Per-instance results are written to CSV, and aggregates are recomputed from those
rows. The TSP table has one row per solver with mean/stdev length (km) and time
(s) for each scenario size.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import tsp
from .dubins import VehicleLimits
from .planner import PipelineConfig, plan_pipeline, write_plan_geojson
from .segment import SegmentConfig
from .terrain import GeoPoint, TerrainGrid, read_terrain
from .visibility import AltitudeSet

log = logging.getLogger(__name__)

WORKERS_ENV = "SARPLAN_WORKERS"
STANDARD_SIZES = (20, 50, 100)


@dataclass(frozen=True)
class Scenario:
    targets: tsp.TargetSet
    n: int
    seed: int
    terrain_ref: Optional[str] = None


@dataclass(frozen=True)
class BenchRecord:
    name: str
    n: int
    length_mean_km: float
    length_std_km: float
    time_mean_s: float
    time_std_s: float
    count: int


def gen_scenario(
    seed: int,
    n: int,
    terrain: TerrainGrid,
    standoff_radius: float = 1500.0,
    margin: Optional[float] = None,
    max_tries: int = 100_000,
    terrain_ref: Optional[str] = None,
) -> Scenario:
    """Uniform target placement over valid terrain, depot at the grid center.

    Targets are kept at least ``2 * standoff_radius`` apart and ``margin`` meters
    from the grid boundary (default: standoff plus a 1.5 km half segment).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    margin = 2 * standoff_radius if margin is None else margin
    rng = np.random.default_rng(seed)
    lo_x, hi_x = terrain.origin_x + margin, terrain.origin_x + terrain.width - margin
    lo_y, hi_y = terrain.origin_y + margin, terrain.origin_y + terrain.height - margin
    if lo_x >= hi_x or lo_y >= hi_y:
        raise ValueError("margin leaves no room for targets")
    min_sep = 2 * standoff_radius
    pts: list[tuple[float, float]] = []
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could only place {len(pts)} of {n} targets after {max_tries} tries")
        x, y = float(rng.uniform(lo_x, hi_x)), float(rng.uniform(lo_y, hi_y))
        if terrain.is_nodata_at(x, y) or not math.isfinite(float(terrain.sample(x, y))):
            continue
        if any(math.hypot(x - px, y - py) < min_sep for px, py in pts):
            continue
        pts.append((x, y))
    cx, cy = terrain.center
    targets = tsp.TargetSet(GeoPoint(cx, cy), tuple(tsp.Target(i + 1, x, y) for i, (x, y) in enumerate(pts)))
    return Scenario(targets, n, seed, terrain_ref)


def scenario_seed(base: int, n: int, index: int) -> int:
    return base * 1_000_003 + n * 1009 + index


def _stats(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate(rows: Iterable[dict], name_key: str, length_key: str = "length_m", time_key: str = "time_s"):
    """Group per-instance rows by (name, n); rows with missing lengths are skipped."""
    groups: dict[tuple[str, int], list[dict]] = {}
    for row in rows:
        groups.setdefault((row[name_key], int(row["n"])), []).append(row)
    out = []
    for (name, n), rs in groups.items():
        ok = [r for r in rs if r[length_key] not in ("", None) and math.isfinite(float(r[length_key]))]
        if not ok:
            continue
        lm, ls = _stats([float(r[length_key]) / 1000 for r in ok])
        tm, ts = _stats([float(r[time_key]) for r in ok])
        out.append(BenchRecord(name, n, lm, ls, tm, ts, len(ok)))
    return out


def bench_tsp(scenarios: Sequence[Scenario], solvers: Sequence[str], seed: int = 0):
    """Run each solver on every scenario; returns (records, per-instance rows).

    One warm-up solve per solver is discarded before timing.
    """
    rows = []
    if scenarios:
        m0 = tsp.distance_matrix(scenarios[0].targets)
        for s in solvers:
            try:
                tsp.solve(m0, s, seed)
            except Exception:
                pass
    for idx, sc in enumerate(scenarios):
        m = tsp.distance_matrix(sc.targets)
        for s in solvers:
            t0 = time.perf_counter()
            try:
                tour = tsp.solve(m, s, seed)
                length = tsp.tour_length(m, tour)
            except Exception as exc:
                log.warning("solver %s failed on n=%d instance %d: %s", s, sc.n, idx, exc)
                length = math.nan
            elapsed = time.perf_counter() - t0
            rows.append({"solver": s, "n": sc.n, "instance": idx, "seed": sc.seed, "length_m": length, "time_s": elapsed})
    records = aggregate(rows, "solver")
    order = {s: i for i, s in enumerate(solvers)}
    records.sort(key=lambda r: (order.get(r.name, len(order)), r.n))
    return records, rows


def _run_planner(args):
    grid, sc, config = args
    return plan_pipeline(grid, sc.targets, config)


def bench_planner(scenarios: Sequence[Scenario], grid: TerrainGrid, config: PipelineConfig = PipelineConfig(),
                  workers: Optional[int] = None, keep_results: bool = False):
    """Full pipeline per scenario; returns (records, per-instance rows, summary[, results])."""
    workers = workers if workers is not None else int(os.environ.get(WORKERS_ENV, "1"))
    jobs = [(grid, sc, config) for sc in scenarios]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_planner, jobs))
    else:
        results = [_run_planner(j) for j in jobs]
    rows = []
    for idx, (sc, res) in enumerate(zip(scenarios, results)):
        mt = res.metrics
        times = mt["per_stage_time_s"]
        rows.append({
            "planner": "astar",
            "n": sc.n,
            "instance": idx,
            "seed": sc.seed,
            "length_m": mt["total_length_m"],
            "tour_length_m": mt["tour_length_m"],
            "time_s": sum(times.values()),
            "time_sequencing_s": times["sequencing"],
            "time_segments_s": times["segments"],
            "time_planning_s": times["planning"],
            "mean_accuracy": mt["mean_accuracy"],
            "baseline_mean_accuracy": mt["baseline_mean_accuracy"],
        })
    records = aggregate(rows, "planner")
    summary = {}
    for n in sorted({r["n"] for r in rows}):
        rs = [r for r in rows if r["n"] == n]
        acc_mean, acc_std = _stats([r["mean_accuracy"] for r in rs])
        summary[str(n)] = {
            "mean_accuracy": acc_mean,
            "accuracy_std": acc_std,
            "accuracy_ci95": 1.96 * acc_std / math.sqrt(len(rs)) if len(rs) > 1 else 0.0,
            "baseline_mean_accuracy": statistics.fmean(r["baseline_mean_accuracy"] for r in rs),
            "mean_time_s": {k: statistics.fmean(r[f"time_{k}_s"] for r in rs) for k in ("sequencing", "segments", "planning")},
        }
    if keep_results:
        return records, rows, summary, results
    return records, rows, summary


# ---------------------------------------------------------------------------
# persistence


def write_rows_csv(rows: Sequence[dict], path) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_table_csv(records: Sequence[BenchRecord], path) -> None:
    """One row per solver, four columns (length mean/std, time mean/std) per n."""
    sizes = sorted({r.n for r in records})
    names = list(dict.fromkeys(r.name for r in records))
    by_key = {(r.name, r.n): r for r in records}
    header = ["algorithm"]
    for n in sizes:
        header += [f"n{n}_length_km_mean", f"n{n}_length_km_std", f"n{n}_time_s_mean", f"n{n}_time_s_std", f"n{n}_count"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for name in names:
            row = [name]
            for n in sizes:
                r = by_key.get((name, n))
                row += [repr(float(r.length_mean_km)), repr(float(r.length_std_km)), repr(float(r.time_mean_s)), repr(float(r.time_std_s)), r.count] if r else ["", "", "", "", 0]
            w.writerow(row)


# ---------------------------------------------------------------------------
# configuration

_FLOAT_KEYS = {
    "standoff_radius", "speed", "observation_time", "angle_step_deg", "min_turn_radius",
    "max_flight_path_angle_deg", "extent_half", "depot_altitude_agl",
}
_INT_KEYS = {"resolution", "depot_headings", "seed", "instances", "workers"}


def load_config(path) -> dict:
    """Parse a ``key=value`` file; blank lines and ``#`` comments are ignored."""
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in _FLOAT_KEYS:
            out[key] = float(value)
        elif key in _INT_KEYS:
            out[key] = int(value)
        elif key in ("altitudes",):
            out[key] = tuple(float(v) for v in value.split(","))
        elif key in ("sizes",):
            out[key] = tuple(int(v) for v in value.split(","))
        elif key in ("solvers",):
            out[key] = tuple(v.strip() for v in value.split(","))
        elif key in ("closed",):
            out[key] = value.lower() in ("1", "true", "yes")
        elif key in ("solver", "predictor"):
            out[key] = value
        else:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return out


def pipeline_config(settings: dict) -> PipelineConfig:
    seg = SegmentConfig(
        standoff_radius=settings.get("standoff_radius", 1500.0),
        speed=settings.get("speed", 100.0),
        observation_time=settings.get("observation_time", 30.0),
        angle_step=math.radians(settings.get("angle_step_deg", 1.0)),
    )
    limits = VehicleLimits(
        min_turn_radius=settings.get("min_turn_radius", 500.0),
        max_flight_path_angle=math.radians(settings.get("max_flight_path_angle_deg", 10.0)),
        speed=settings.get("speed", 100.0),
    )
    base = PipelineConfig()
    known = {f.name for f in fields(PipelineConfig)}
    kw = {k: v for k, v in settings.items() if k in known and k not in ("segment", "limits", "altitudes")}
    if "altitudes" in settings:
        kw["altitudes"] = AltitudeSet(settings["altitudes"])
    return replace(base, segment=seg, limits=limits, **kw)


# ---------------------------------------------------------------------------
# driver


def run_bench(terrain_path, sizes: Sequence[int], instances: int, solvers: Sequence[str], seed: int, out_dir,
              settings: Optional[dict] = None, planner: bool = True, svg_per_size: int = 1) -> dict:
    """Full benchmark: scenarios, TSP table, planner table, metrics JSON and SVG figures."""
    from .plotting import export_svg, plot_bench

    settings = dict(settings or {})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = read_terrain(terrain_path)
    config = pipeline_config({**settings, "seed": seed})
    scenarios = [
        gen_scenario(scenario_seed(seed, n, i), n, grid, config.segment.standoff_radius, terrain_ref=str(terrain_path))
        for n in sizes
        for i in range(instances)
    ]
    for i, sc in enumerate(scenarios):
        tsp.write_targets_csv(sc.targets, out / f"targets_n{sc.n}_{i % instances:03d}.csv")

    tsp_records, tsp_rows = bench_tsp(scenarios, solvers, seed)
    write_rows_csv(tsp_rows, out / "tsp_instances.csv")
    write_table_csv(tsp_records, out / "tsp_table.csv")
    plot_bench(tsp_records, "length", out / "tsp_length.svg")
    metrics = {"tsp": [r.__dict__ for r in tsp_records]}

    if planner:
        workers = settings.get("workers")
        p_records, p_rows, summary, results = bench_planner(scenarios, grid, config, workers, keep_results=True)
        write_rows_csv(p_rows, out / "planner_instances.csv")
        write_table_csv(p_records, out / "planner_table.csv")
        metrics["planner"] = [r.__dict__ for r in p_records]
        metrics["accuracy"] = summary
        shown: dict[int, int] = {}
        for sc, res in zip(scenarios, results):
            if shown.get(sc.n, 0) >= svg_per_size:
                continue
            k = shown.get(sc.n, 0)
            shown[sc.n] = k + 1
            overlays = [res.stacks[tid][[v.altitude_agl for v in res.stacks[tid]].index(seg.altitude_agl)]
                        for tid, seg in res.segments.items()]
            svg = export_svg(res.plan, grid, overlays, (sc.targets.depot.x, sc.targets.depot.y), sc.targets.waypoints)
            (out / f"plan_n{sc.n}_{k:03d}.svg").write_text(svg)
            write_plan_geojson(res.plan, out / f"plan_n{sc.n}_{k:03d}.geojson")
    with open(out / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return metrics
