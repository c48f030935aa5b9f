"""End-to-end acceptance checks; each records one PASS/FAIL line in the terminal summary."""

import filecmp
import json
import math
import time

import numpy as np
import pytest

from sarplan import tsp
from sarplan.cli import main
from sarplan.dubins import DubinsPath2D, Pose, VehicleLimits, dubins_shortest_2d, lift_to_3d
from sarplan.harness import gen_scenario
from sarplan.planner import PipelineConfig, astar_plan, build_layer_graph, plan_pipeline, validate_plan
from sarplan.policy import PolicyModel, loss_and_grads, make_samples, policy_forward, train, TrainConfig
from sarplan.segment import SegmentConfig, segment_accuracy, segment_from_angle, segment_reward, sweep_best_segment
from sarplan.terrain import GeoPoint, TerrainGrid, generate_synthetic_terrain
from sarplan.visibility import AltitudeSet, VisibilityMap, visibility_stack

from conftest import layered_instance, record
from oracles import LosOracle, brute_force_tsp, enumerate_directions

ALTITUDES = tuple(AltitudeSet())
RELIEF = 2500.0  # terrain family used throughout the suite and by the CLI default
TRAIN_LR = 0.05


# ---------------------------------------------------------------------------
# 1. visibility against a brute-force occlusion oracle


def test_ac1_visibility_oracle():
    total = agree = violations = 0
    elapsed = 0.0
    worst = 1.0
    for seed in range(20):
        grid = generate_synthetic_terrain(seed, 128, 128, 100.0, RELIEF)
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(3000.0, 9800.0, 2)
        target = GeoPoint(x, y, float(grid.sample(x, y)))
        t0 = time.perf_counter()
        stack = visibility_stack(grid, target, AltitudeSet(), extent_half=6400.0, resolution=128)
        elapsed += time.perf_counter() - t0
        values = np.stack([m.values for m in stack]).astype(int)
        violations += int((np.diff(values, axis=0) < 0).sum())

        k = seed % len(ALTITUDES)
        ref = LosOracle(grid).visibility(x, y, target.alt, ALTITUDES[k], 6400.0, 128)
        offs = (np.arange(128) + 0.5) * 100.0
        X, Y = np.meshgrid(x - 6400.0 + offs, y - 6400.0 + offs)
        inside = (X >= 0) & (X <= grid.width) & (Y >= 0) & (Y <= grid.height)
        same = (stack[k].values == ref) & inside
        total += int(inside.sum())
        agree += int(same.sum())
        worst = min(worst, same.sum() / inside.sum())
    rate = agree / total
    ok = rate >= 0.995 and violations == 0 and elapsed < 60.0
    record("AC1 visibility vs oracle", ok,
           f"agreement {rate:.4%} (worst terrain {worst:.2%}), monotonicity violations {violations}, {elapsed:.1f} s")
    assert violations == 0
    assert elapsed < 60.0
    assert rate >= 0.995


# ---------------------------------------------------------------------------
# 2. flat world


def test_ac2_flat_world():
    grid = TerrainGrid(np.zeros((400, 400)), 100.0)
    target = GeoPoint(20_000.0, 20_000.0, 0.0)
    stack = visibility_stack(grid, target)
    cfg = SegmentConfig()
    all_ones = len(stack) == 7 and all(np.all(m.values == 1) for m in stack)
    exact = all(
        segment_accuracy(vis, segment_from_angle(target, a, vis.altitude_agl, cfg)) == 1.0
        for vis in stack
        for a in cfg.angles()
    )
    seg = sweep_best_segment(stack, target, cfg)
    ok = all_ones and exact and seg.altitude_agl == 1000.0 and seg.angle_alpha == 0.0
    record("AC2 flat world", ok, f"7 all-ones maps {all_ones}, accuracy 1.0 everywhere {exact}, "
                                 f"sweep ({seg.altitude_agl:.0f} m, {seg.angle_alpha})")
    assert ok


# ---------------------------------------------------------------------------
# 3. segment geometry


def test_ac3_segment_geometry():
    rng = np.random.default_rng(3)
    worst = 0.0
    for alpha in rng.uniform(0.0, 2 * math.pi, 1000):
        t = GeoPoint(*rng.uniform(-50_000.0, 50_000.0, 2))
        seg = segment_from_angle(t, float(alpha), 2000.0)
        a, b = seg.endpoint_a, seg.endpoint_b
        chord = math.hypot(b.x - a.x, b.y - a.y)
        tangency = abs((b.x - a.x) * (a.y - t.y) - (b.y - a.y) * (a.x - t.x)) / chord
        mx, my = seg.midpoint
        foot = (t.x + 1500.0 * math.cos(alpha), t.y + 1500.0 * math.sin(alpha))
        worst = max(worst, abs(tangency - 1500.0) / 1500.0, abs(chord - 3000.0) / 3000.0,
                    math.hypot(mx - foot[0], my - foot[1]) / 1500.0)
    ok = worst <= 1e-6
    record("AC3 segment geometry", ok, f"max relative error {worst:.2e} over 1000 angles")
    assert ok


# ---------------------------------------------------------------------------
# 4. sweep equals exhaustive enumeration


def test_ac4_sweep_matches_enumeration(rugged_grid):
    cfg = SegmentConfig()
    rng = np.random.default_rng(4)
    mismatches = 0
    for tid in range(50):
        x, y = rng.uniform(2000.0, 10_800.0, 2)
        t = GeoPoint(x, y, float(rugged_grid.sample(x, y)))
        stack = visibility_stack(rugged_grid, t, extent_half=6000.0, resolution=120, target_id=tid)
        seg = sweep_best_segment(stack, t, cfg)
        chosen = next(v for v in stack if v.altitude_agl == seg.altitude_agl)
        best = max(
            segment_reward(vis, segment_from_angle(t, a, vis.altitude_agl, cfg, tid))
            for vis in stack
            for a in cfg.angles()
        )
        mismatches += segment_reward(chosen, seg) != best
    record("AC4 sweep = enumeration", mismatches == 0, f"{50 - mismatches}/50 targets equal")
    assert mismatches == 0


# ---------------------------------------------------------------------------
# 5. actor-critic mechanics


def _numeric_grad(fn, params, step=1e-6):
    g = np.zeros_like(params)
    for i in range(params.size):
        hi, lo = params.copy(), params.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (fn(hi) - fn(lo)) / (2 * step)
    return g


def test_ac5_actor_critic():
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        m = PolicyModel.random(4, 5, rng, scale=0.5)
        f, a, r = rng.random((6, 4)), rng.integers(0, 5, 6), rng.random(6)
        terms, (gw, gb, gc, gc0) = loss_and_grads(m, f, a, r, 0.01)
        analytic = np.concatenate([gw.ravel(), gb, gc, [gc0]])
        adv = terms.advantage.copy()
        num = _numeric_grad(lambda p: loss_and_grads(m.with_params(p), f, a, r, 0.01, advantage=adv)[0].total, m.params())
        worst = max(worst, np.linalg.norm(analytic - num) / np.linalg.norm(num))

    res = 300
    v = np.zeros((res, res), np.uint8)
    v[135:166, 135] = 1  # only the alpha = pi tangent line is visible
    vis = VisibilityMap(0, 1000.0, 15_000.0, res, v, 0.0, 0.0)
    origin = GeoPoint(0.0, 0.0)
    samples = make_samples([[vis]], [origin])
    oracle = sweep_best_segment([vis], origin).angle_alpha
    hits = 0
    for seed in range(20):
        model, _ = train(samples, TrainConfig(learning_rate=TRAIN_LR, episodes=300, seed=seed))
        k = int(np.argmax(policy_forward(model, samples[0].features)[0]))
        width = 2 * math.pi / model.k_actions
        diff = abs((k * width - oracle + math.pi) % (2 * math.pi) - math.pi)
        hits += diff <= 1.5 * width  # own bin (half width) or a neighbor
    ok = worst < 1e-5 and hits >= 18
    record("AC5 actor-critic", ok, f"gradient rel. error {worst:.1e}, argmax within one bin on {hits}/20 seeds")
    assert worst < 1e-5
    assert hits >= 18


# ---------------------------------------------------------------------------
# 6. TSP suite


def _random_set(seed, n, scale=10_000.0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, scale, (n + 1, 2))
    return tsp.TargetSet(GeoPoint(*pts[0]), tuple(tsp.Target(i, *pts[i]) for i in range(1, n + 1)))


def test_ac6_tsp_suite(capsys):
    exact_ok = all(
        tsp.tour_length(m, tsp.solve_exact(m)) == pytest.approx(brute_force_tsp(m), rel=1e-12)
        for n in range(1, 9)
        for m in (tsp.distance_matrix(_random_set(600 + 10 * n + s, n)) for s in range(3))
    )
    chris_viol = 0
    two_opt_good = 0
    for seed in range(100):
        m = tsp.distance_matrix(_random_set(6000 + seed, 10))
        opt = tsp.tour_length(m, tsp.solve_exact(m))
        if seed < 50:
            chris_viol += tsp.tour_length(m, tsp.solve_christofides(m)) > 1.5 * opt + 1e-9
        two_opt_good += tsp.tour_length(m, tsp.solve(m, "2opt")) <= 1.05 * opt

    means = {}
    for s in ("random", "nearest", "christofides"):
        lengths = [tsp.tour_length(m, tsp.solve(m, s, seed))
                   for seed in range(30)
                   for m in [tsp.distance_matrix(_random_set(9000 + seed, 20))]]
        means[s] = float(np.mean(lengths)) / 1000.0
    ordering = means["random"] <= means["nearest"] <= means["christofides"]
    soft = ", ".join(f"{k} {v:.2f} km" for k, v in means.items())

    ok = exact_ok and chris_viol == 0 and two_opt_good >= 90
    record("AC6 TSP suite", ok,
           f"exact=brute {exact_ok}, christofides violations {chris_viol}/50, 2-opt within 5% {two_opt_good}/100; "
           f"n=20 means {soft} (ordering {'holds' if ordering else 'does not hold'}, reported only)")
    assert exact_ok
    assert chris_viol == 0
    assert two_opt_good >= 90


# ---------------------------------------------------------------------------
# 7. Dubins


def test_ac7_dubins():
    limits = VehicleLimits()
    r = limits.min_turn_radius
    slope = math.tan(limits.max_flight_path_angle)
    rng = np.random.default_rng(7)
    chord_viol = lift_viol = 0
    for _ in range(10_000):
        x0, y0, x1, y1 = rng.uniform(-5000.0, 5000.0, 4)
        h0, h1 = rng.uniform(0.0, 2 * math.pi, 2)
        p = dubins_shortest_2d(Pose(x0, y0, 0.0, h0), Pose(x1, y1, 0.0, h1), r)
        chord_viol += p.horizontal_length < math.hypot(x1 - x0, y1 - y0) - 1e-7 * r
        z0, z1 = rng.uniform(0.0, 4000.0, 2)
        lifted = lift_to_3d(p, z0, z1, limits)
        lift_viol += abs(z1 - z0) > slope * lifted.total_length + 1e-9
    aligned = dubins_shortest_2d(Pose(0, 0, 0, 0), Pose(1000, 0, 0, 0), 100.0).horizontal_length == 1000.0
    worked = lift_to_3d(DubinsPath2D("LSL", (0.0, 2000.0, 0.0), 500.0), 0.0, 1000.0,
                        VehicleLimits(500.0, math.radians(10.0))).spiral_turns
    ok = chord_viol == 0 and lift_viol == 0 and aligned and worked == 2
    record("AC7 Dubins", ok, f"chord violations {chord_viol}/10000, lift violations {lift_viol}, "
                             f"aligned exact {aligned}, worked example {worked} circles")
    assert ok


# ---------------------------------------------------------------------------
# 8. planner optimality


def test_ac8_planner_optimality():
    mismatches = overestimates = f_drops = 0
    for seed in range(50):
        n = 1 + seed % 12
        order, segs, depot, positions = layered_instance(800 + seed, n)
        g = build_layer_graph(order, segs, depot)
        plan = astar_plan(g, positions, audit=True)
        best, _ = enumerate_directions(g)
        mismatches += plan.total_length != best
        overestimates += plan.audit.overestimates
        f_drops += plan.audit.f_decreases
    ok = mismatches == 0 and overestimates == 0
    record("AC8 planner optimality", ok, f"{50 - mismatches}/50 equal to enumeration, overestimates {overestimates} "
                                         f"(f decreases {f_drops}, reopening keeps A* exact)")
    assert ok


# ---------------------------------------------------------------------------
# 9. end to end


def test_ac9_end_to_end():
    grid = generate_synthetic_terrain(9, 401, 401, 100.0, RELIEF)
    config = PipelineConfig()
    assert config.resolution == 300
    times, paired, valid = [], 0, True
    instances = 4
    for i in range(instances):
        targets = gen_scenario(900 + i, 20, grid).targets
        t0 = time.perf_counter()
        res = plan_pipeline(grid, targets, config)
        times.append(time.perf_counter() - t0)
        ids = sorted(leg.target_id for leg in res.plan.segments)
        valid &= validate_plan(res.plan) == [] and res.plan.legs[-1].kind == "connector" and ids == list(range(1, 21))
        paired += res.metrics["mean_accuracy"] >= res.metrics["baseline_mean_accuracy"]
    ok = max(times) < 120.0 and valid and paired >= 0.95 * instances
    record("AC9 end to end", ok, f"n=20 at 300x300: max {max(times):.1f} s, valid closed plans {valid}, "
                                 f"accuracy >= fixed-angle baseline on {paired}/{instances}")
    assert ok


# ---------------------------------------------------------------------------
# 10. determinism

def _strip_timing(obj):
    if isinstance(obj, dict):
        return {k: _strip_timing(v) for k, v in obj.items() if "time" not in k}
    if isinstance(obj, list):
        return [_strip_timing(v) for v in obj]
    return obj


def _csv_without_timing(path):
    rows = [line.split(",") for line in path.read_text().splitlines()]
    keep = [i for i, h in enumerate(rows[0]) if "time" not in h]
    return [[r[i] for i in keep] for r in rows]


def _run_all(out):
    out.mkdir()
    small = out / "small.cfg"
    small.write_text("resolution=60\nextent_half=4000\nangle_step_deg=5\n")
    t, tg = str(out / "t.asc"), str(out / "targets.csv")
    steps = [
        ["gen-terrain", "--seed", "10", "--rows", "150", "--cols", "150", "--out", t],
        ["scenario", "--terrain", t, "--n", "4", "--seed", "2", "--out", tg],
        ["visibility", "--terrain", t, "--target", "7500,7500", "--alt", "1500", "--extent", "4000",
         "--resolution", "80", "--out", str(out / "vis.pgm")],
        ["segments", "--terrain", t, "--targets", tg, "--config", str(small), "--out", str(out / "segments.csv")],
        ["sequence", "--targets", tg, "--solver", "random", "--seed", "3", "--out", str(out / "tour.csv")],
        ["train-policy", "--terrain", t, "--targets", tg, "--episodes", "20", "--config", str(small),
         "--metrics", str(out / "train.csv"), "--out", str(out / "model.npz")],
        ["plan", "--terrain", t, "--targets", tg, "--config", str(small), "--svg", str(out / "plan.svg"),
         "--out", str(out / "plan.geojson")],
        ["plan", "--terrain", t, "--targets", tg, "--config", str(small), "--model", str(out / "model.npz"),
         "--out", str(out / "plan_policy.geojson")],
        ["bench", "--terrain", t, "--sizes", "3,4", "--instances", "2", "--config", str(small),
         "--out", str(out / "bench")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv


def test_ac10_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    _run_all(a)
    _run_all(b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    differing = []
    for rel in files:
        pa, pb = a / rel, b / rel
        if rel.suffix == ".json":
            same = _strip_timing(json.loads(pa.read_text())) == _strip_timing(json.loads(pb.read_text()))
        elif rel.suffix == ".csv" and (rel.name.endswith(("_instances.csv", "_table.csv"))):
            same = _csv_without_timing(pa) == _csv_without_timing(pb)
        else:
            same = filecmp.cmp(pa, pb, shallow=False)
        if not same:
            differing.append(str(rel))
    ok = not differing
    record("AC10 determinism", ok, f"{len(files) - len(differing)}/{len(files)} artifacts identical "
                                   f"(wall-clock timing fields excluded)")
    assert not differing, differing
