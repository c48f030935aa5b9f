import math

import numpy as np
import pytest

from sarplan.segment import segment_from_angle
from sarplan.terrain import GeoPoint, TerrainGrid, generate_synthetic_terrain

# name -> (passed, detail); filled by the acceptance module
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE[name] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s[2:].split()[0]) if s[2:].split()[0].isdigit() else 99):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}  {detail}")


@pytest.fixture
def flat_grid():
    return TerrainGrid(np.zeros((64, 64)), 100.0)


@pytest.fixture(scope="session")
def rugged_grid():
    return generate_synthetic_terrain(7, 129, 129, 100.0, 2500.0)


def ridge_grid(height=200.0, rows=41, cols=41, cell=100.0, ridge_col=20):
    z = np.zeros((rows, cols))
    z[:, ridge_col] = height
    return TerrainGrid(z, cell)


def crater_grid(rim_height=800.0, rim_radius=2000.0, size=81, cell=100.0):
    """Flat floor with a ring wall around the grid center."""
    c = (np.arange(size) + 0.5) * cell
    X, Y = np.meshgrid(c, c)
    r = np.hypot(X - size * cell / 2, Y - size * cell / 2)
    z = np.where(np.abs(r - rim_radius) < 1.5 * cell, rim_height, 0.0)
    return TerrainGrid(z, cell)


def wrap(a):
    return a % (2 * math.pi)


LAYER_ALTS = (1000.0, 1500.0, 2000.0, 2500.0, 3000.0, 3500.0, 4000.0)


def layered_instance(seed, n, sep=3000.0, span=40_000.0):
    """Random separated targets with random segments; returns (tour ids, segments, depot, positions)."""
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < n:
        p = rng.uniform(0, span, 2)
        if all(math.dist(p, q) >= sep for q in pts):
            pts.append(p)
    segs = {}
    for i, p in enumerate(pts):
        target = GeoPoint(p[0], p[1], rng.uniform(0, 800))
        segs[i + 1] = segment_from_angle(target, rng.uniform(0, 2 * math.pi), float(rng.choice(LAYER_ALTS)), target_id=i + 1)
    order = [int(v) for v in rng.permutation(n) + 1]
    depot = GeoPoint(span / 2, span / 2, 1000.0)
    positions = [pts[t - 1] for t in order]
    return order, segs, depot, positions
