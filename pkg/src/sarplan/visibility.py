"""Binary visibility maps of aircraft positions around a ground target.

A map covers a square region centered on the target. Cell ``[row, col]`` (row 0
south) holds 1 when an aircraft above that cell, at ``altitude_agl`` over the
target's ground elevation, has a clear line of sight to the target.

Every altitude in a stack is derived from one pass over the rays: along a fixed
horizontal ray the sight-line test is linear in observer altitude, so each cell
has a threshold altitude above which it is visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .terrain import GeoPoint, TerrainError, TerrainGrid, curvature_drop

DEFAULT_ALTITUDES = (1000.0, 1500.0, 2000.0, 2500.0, 3000.0, 3500.0, 4000.0)
DEFAULT_EXTENT_HALF = 15_000.0
DEFAULT_RESOLUTION = 300

_CHUNK_SAMPLES = 2_000_000


@dataclass(frozen=True)
class AltitudeSet:
    altitudes: tuple[float, ...] = DEFAULT_ALTITUDES

    def __post_init__(self):
        alts = tuple(float(a) for a in self.altitudes)
        if not alts:
            raise ValueError("altitude set is empty")
        if any(b <= a for a, b in zip(alts, alts[1:])):
            raise ValueError("altitudes must be strictly increasing")
        object.__setattr__(self, "altitudes", alts)

    def __iter__(self):
        return iter(self.altitudes)

    def __len__(self):
        return len(self.altitudes)


@dataclass(frozen=True, eq=False)
class VisibilityMap:
    target_id: int
    altitude_agl: float
    extent_half: float
    resolution: int
    values: np.ndarray
    center_x: float
    center_y: float

    def __post_init__(self):
        if self.resolution <= 0 or self.extent_half <= 0:
            raise ValueError("resolution and extent_half must be positive")
        vals = np.asarray(self.values, dtype=np.uint8)
        if vals.shape != (self.resolution, self.resolution):
            raise ValueError(f"values shape {vals.shape} != resolution {self.resolution}")
        if vals.max(initial=0) > 1:
            raise ValueError("visibility values must be 0 or 1")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        for name in ("altitude_agl", "extent_half", "center_x", "center_y"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def cell_size(self) -> float:
        return 2 * self.extent_half / self.resolution

    @property
    def x0(self) -> float:
        return self.center_x - self.extent_half

    @property
    def y0(self) -> float:
        return self.center_y - self.extent_half

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrids (X, Y) of cell-center coordinates, shape (resolution, resolution)."""
        offs = (np.arange(self.resolution) + 0.5) * self.cell_size
        return np.meshgrid(self.x0 + offs, self.y0 + offs)

    def lookup(self, x, y) -> np.ndarray:
        """phi at arbitrary points; 0 outside the map."""
        col = np.floor((np.asarray(x) - self.x0) / self.cell_size)
        row = np.floor((np.asarray(y) - self.y0) / self.cell_size)
        inside = (col >= 0) & (col < self.resolution) & (row >= 0) & (row < self.resolution)
        col = np.where(inside, col, 0).astype(np.intp)
        row = np.where(inside, row, 0).astype(np.intp)
        return np.where(inside, self.values[row, col], 0).astype(np.int64)

    def equals(self, other: "VisibilityMap") -> bool:
        return (
            self.target_id == other.target_id
            and self.altitude_agl == other.altitude_agl
            and self.extent_half == other.extent_half
            and self.resolution == other.resolution
            and self.center_x == other.center_x
            and self.center_y == other.center_y
            and np.array_equal(self.values, other.values)
        )


def _check_target(grid: TerrainGrid, target: GeoPoint) -> float:
    if not grid.contains(target.x, target.y):
        raise TerrainError(f"target ({target.x}, {target.y}) outside grid")
    if grid.is_nodata_at(target.x, target.y):
        raise TerrainError(f"target ({target.x}, {target.y}) on a nodata cell")
    z = float(grid.sample(target.x, target.y))
    if not math.isfinite(z):
        raise TerrainError(f"nodata neighborhood at target ({target.x}, {target.y})")
    return z


def threshold_altitudes(
    grid: TerrainGrid,
    target: GeoPoint,
    extent_half: float = DEFAULT_EXTENT_HALF,
    resolution: int = DEFAULT_RESOLUTION,
    target_height: float = 0.0,
    curvature: bool = True,
) -> tuple[np.ndarray, float]:
    """Per-cell minimum observer altitude (exclusive) for a clear view of the target.

    Returns ``(threshold, ground)`` where ``ground`` is the target's terrain
    elevation. A cell is visible at absolute altitude H iff ``H > threshold``.
    Cells outside the terrain grid get +inf.
    """
    ground = _check_target(grid, target)
    z_t = ground + target_height
    cell = 2 * extent_half / resolution
    offs = (np.arange(resolution) + 0.5) * cell
    xs, ys = np.meshgrid(target.x - extent_half + offs, target.y - extent_half + offs)
    xs, ys = xs.ravel(), ys.ravel()
    thr = np.full(xs.size, np.inf)

    inside = np.flatnonzero(grid.contains(xs, ys))
    dx = xs[inside] - target.x
    dy = ys[inside] - target.y
    dist = np.hypot(dx, dy)
    m = np.ceil(dist / (grid.cell_size / 2)).astype(np.int64)

    order = np.argsort(m, kind="stable")
    start = 0
    while start < order.size:
        # chunk cells of similar ray length so padding stays small
        m_hi = m[order[start]]
        stop = start + 1
        while stop < order.size:
            m_hi = m[order[stop]]
            if (stop - start + 1) * max(m_hi, 1) > _CHUNK_SAMPLES:
                break
            stop += 1
        idx = order[start:stop]
        start = stop
        mm = m[idx]
        kmax = int(mm.max())
        if kmax <= 1:
            thr[inside[idx]] = -np.inf
            continue
        k = np.arange(1, kmax)
        s = k[None, :] / np.maximum(mm, 1)[:, None]
        valid = k[None, :] < mm[:, None]
        terrain = grid.sample(target.x + s * dx[idx, None], target.y + s * dy[idx, None])
        z_eff = np.full(idx.size, z_t)
        if curvature:
            d = dist[idx, None]
            terrain = terrain - curvature_drop((1 - s) * d)
            z_eff = z_t - curvature_drop(dist[idx])
        need = z_eff[:, None] + (terrain - z_eff[:, None]) / s
        need = np.where(valid, need, -np.inf)
        thr[inside[idx]] = need.max(axis=1)
    return thr.reshape(resolution, resolution), ground


def _make_map(thr, ground, alt, target, target_id, extent_half, resolution) -> VisibilityMap:
    values = (ground + alt > thr).astype(np.uint8)
    return VisibilityMap(target_id, float(alt), extent_half, resolution, values, target.x, target.y)


def compute_visibility_map(
    grid: TerrainGrid,
    target: GeoPoint,
    altitude_agl: float,
    extent_half: float = DEFAULT_EXTENT_HALF,
    resolution: int = DEFAULT_RESOLUTION,
    target_id: int = 0,
    target_height: float = 0.0,
    curvature: bool = True,
) -> VisibilityMap:
    thr, ground = threshold_altitudes(grid, target, extent_half, resolution, target_height, curvature)
    return _make_map(thr, ground, altitude_agl, target, target_id, extent_half, resolution)


def visibility_stack(
    grid: TerrainGrid,
    target: GeoPoint,
    altitudes: AltitudeSet | None = None,
    extent_half: float = DEFAULT_EXTENT_HALF,
    resolution: int = DEFAULT_RESOLUTION,
    target_id: int = 0,
    target_height: float = 0.0,
    curvature: bool = True,
) -> list[VisibilityMap]:
    """One map per altitude, in AltitudeSet order."""
    altitudes = altitudes if altitudes is not None else AltitudeSet()
    thr, ground = threshold_altitudes(grid, target, extent_half, resolution, target_height, curvature)
    return [_make_map(thr, ground, a, target, target_id, extent_half, resolution) for a in altitudes]


def write_pgm(vis: VisibilityMap, path) -> None:
    """Binary PGM (P5, maxval 1), north row first, plus a ``.meta`` sidecar."""
    path = Path(path)
    res = vis.resolution
    header = f"P5\n{res} {res}\n1\n".encode("ascii")
    path.write_bytes(header + vis.values[::-1].tobytes())
    meta = path.with_name(path.name + ".meta")
    meta.write_text(
        f"target_id={vis.target_id} target_x={vis.center_x!r} target_y={vis.center_y!r} "
        f"altitude={vis.altitude_agl!r} extent_half={vis.extent_half!r} resolution={res}\n"
    )


def read_pgm(path) -> VisibilityMap:
    path = Path(path)
    data = path.read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    pos += 1
    if tokens[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    values = np.frombuffer(data[pos : pos + w * h], dtype=np.uint8).reshape(h, w)[::-1]
    meta = dict(kv.split("=", 1) for kv in path.with_name(path.name + ".meta").read_text().split())
    return VisibilityMap(
        target_id=int(meta["target_id"]),
        altitude_agl=float(meta["altitude"]),
        extent_half=float(meta["extent_half"]),
        resolution=int(meta["resolution"]),
        values=values.copy(),
        center_x=float(meta["target_x"]),
        center_y=float(meta["target_y"]),
    )
