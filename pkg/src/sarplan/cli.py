"""Command-line entry point: ``sarplan <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import harness, tsp
from .terrain import GeoPoint, elevation_at, generate_synthetic_terrain, read_terrain, write_terrain


def _xy(text: str) -> tuple[float, float]:
    x, y = text.split(",")
    return float(x), float(y)


def _settings(args) -> dict:
    return harness.load_config(args.config) if getattr(args, "config", None) else {}


def cmd_gen_terrain(args):
    grid = generate_synthetic_terrain(args.seed, args.rows, args.cols, args.cell_size, args.max_relief)
    write_terrain(grid, args.out)


def cmd_scenario(args):
    grid = read_terrain(args.terrain)
    sc = harness.gen_scenario(args.seed, args.n, grid, args.standoff)
    tsp.write_targets_csv(sc.targets, args.out)


def cmd_visibility(args):
    from .visibility import compute_visibility_map, write_pgm

    grid = read_terrain(args.terrain)
    x, y = _xy(args.target)
    vis = compute_visibility_map(grid, GeoPoint(x, y, elevation_at(grid, x, y)), args.alt, args.extent, args.resolution)
    write_pgm(vis, args.out)
    print(f"visible fraction {vis.values.mean():.4f}")


def cmd_segments(args):
    from .planner import predict_segments
    from .segment import segment_accuracy, segment_reward, write_segments_csv

    grid = read_terrain(args.terrain)
    targets = tsp.read_targets_csv(args.targets)
    settings = _settings(args)
    if args.angle_step is not None:
        settings["angle_step_deg"] = args.angle_step
    config = harness.pipeline_config(settings)
    stacks, segs = predict_segments(grid, targets, config)
    rows = []
    for t in targets.waypoints:
        seg = segs[t.id]
        vis = next(v for v in stacks[t.id] if v.altitude_agl == seg.altitude_agl)
        rows.append((seg, segment_reward(vis, seg), segment_accuracy(vis, seg)))
    write_segments_csv(rows, args.out)


def cmd_sequence(args):
    targets = tsp.read_targets_csv(args.targets)
    m = tsp.distance_matrix(targets)
    tour = tsp.solve(m, args.solver, args.seed)
    tsp.write_tour_csv(targets, tour, args.out)
    print(f"tour length {tsp.tour_length(m, tour):.1f} m")


def cmd_train_policy(args):
    from .planner import predict_segments
    from .policy import TrainConfig, make_samples, save_model, train, write_metrics_csv

    grid = read_terrain(args.terrain)
    targets = tsp.read_targets_csv(args.targets)
    config = harness.pipeline_config(_settings(args))
    stacks, _ = predict_segments(grid, targets, config)
    points = [GeoPoint(t.x, t.y, elevation_at(grid, t.x, t.y)) for t in targets.waypoints]
    samples = make_samples([stacks[t.id] for t in targets.waypoints], points)
    tc = TrainConfig(learning_rate=args.lr, episodes=args.episodes, seed=args.seed, batch_size=args.batch_size)
    model, log = train(samples, tc, config.segment)
    save_model(model, args.out)
    if args.metrics:
        write_metrics_csv(log, args.metrics)


def cmd_plan(args):
    from .planner import plan_pipeline, write_plan_geojson, write_poses_csv

    grid = read_terrain(args.terrain)
    targets = tsp.read_targets_csv(args.targets)
    settings = _settings(args)
    settings.update(solver=args.solver, seed=args.seed)
    if args.open:
        settings["closed"] = False
    model = None
    if args.model:
        from .policy import load_model

        model = load_model(args.model)
        settings["predictor"] = "policy"
    config = harness.pipeline_config(settings)
    res = plan_pipeline(grid, targets, config, model)
    write_plan_geojson(res.plan, args.out)
    out = Path(args.out)
    write_poses_csv(res.plan, out.with_suffix(".poses.csv"))
    with open(out.with_suffix(".metrics.json"), "w") as fh:
        json.dump(res.metrics, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if args.svg:
        from .plotting import export_svg

        overlays = [
            next(v for v in res.stacks[tid] if v.altitude_agl == seg.altitude_agl) for tid, seg in res.segments.items()
        ]
        svg = export_svg(res.plan, grid, overlays, (targets.depot.x, targets.depot.y), targets.waypoints)
        Path(args.svg).write_text(svg)
    print(f"total length {res.plan.total_length / 1000:.2f} km, mean accuracy {res.metrics['mean_accuracy']:.4f}")


def cmd_bench(args):
    settings = _settings(args)
    sizes = tuple(int(v) for v in args.sizes.split(",")) if args.sizes else settings.get("sizes", harness.STANDARD_SIZES)
    solvers = tuple(args.solvers.split(",")) if args.solvers else settings.get("solvers", ("exact", "christofides", "nearest", "farthest", "random", "2opt"))
    solvers = tuple(s for s in solvers if s != "exact" or max(sizes) <= tsp.MAX_EXACT)
    instances = args.instances if args.instances is not None else settings.get("instances", 100)
    harness.run_bench(args.terrain, sizes, instances, solvers, args.seed, args.out, settings, planner=not args.tsp_only)
    print(f"results written to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sarplan", description="Terrain-aware multi-target SAR flight planning")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-terrain", help="write a synthetic ESRI ASCII terrain")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rows", type=int, required=True)
    s.add_argument("--cols", type=int, required=True)
    s.add_argument("--cell-size", type=float, default=100.0)
    s.add_argument("--max-relief", type=float, default=2500.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_terrain)

    s = sub.add_parser("scenario", help="sample a targets CSV on a terrain")
    s.add_argument("--terrain", required=True)
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--standoff", type=float, default=1500.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scenario)

    s = sub.add_parser("visibility", help="visibility map of one target as PGM")
    s.add_argument("--terrain", required=True)
    s.add_argument("--target", required=True, help="X,Y in meters")
    s.add_argument("--alt", type=float, required=True, help="altitude above target ground (m)")
    s.add_argument("--extent", type=float, default=15_000.0, help="half-width of the square region (m)")
    s.add_argument("--resolution", type=int, default=300)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_visibility)

    s = sub.add_parser("segments", help="best observation segment per target (CSV)")
    s.add_argument("--terrain", required=True)
    s.add_argument("--targets", required=True)
    s.add_argument("--angle-step", type=float, default=None, help="sweep step in degrees")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_segments)

    s = sub.add_parser("sequence", help="order targets with a TSP solver")
    s.add_argument("--targets", required=True)
    s.add_argument("--solver", default="2opt", choices=tsp.SOLVERS + ("christofides-greedy",))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sequence)

    s = sub.add_parser("train-policy", help="train the linear actor-critic segment policy")
    s.add_argument("--terrain", required=True)
    s.add_argument("--targets", required=True)
    s.add_argument("--episodes", type=int, default=500)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--batch-size", type=int, default=6)
    s.add_argument("--metrics", help="CSV path for the per-episode log")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_policy)

    s = sub.add_parser("plan", help="end-to-end mission plan as GeoJSON")
    s.add_argument("--terrain", required=True)
    s.add_argument("--targets", required=True)
    s.add_argument("--solver", default="2opt", choices=tsp.SOLVERS + ("christofides-greedy",))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--model", help="use a trained policy instead of the sweep")
    s.add_argument("--open", action="store_true", help="do not return to the depot")
    s.add_argument("--svg", help="also render the mission figure")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("bench", help="benchmark solvers and the planner over scenario sets")
    s.add_argument("--terrain", required=True)
    s.add_argument("--sizes", help="comma list, default 20,50,100")
    s.add_argument("--instances", type=int)
    s.add_argument("--solvers", help="comma list of TSP solvers")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tsp-only", action="store_true")
    s.add_argument("--config", help="key=value defaults file")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"sarplan {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
