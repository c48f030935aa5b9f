"""Elevation grids: ESRI ASCII I/O, synthetic relief, interpolation and line of sight.

Grids use planar local coordinates in meters. Cell ``(col, row)`` has its center at
``origin + (index + 0.5) * cell_size``, with row 0 at the southern (lowest y) edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


class TerrainError(ValueError):
    """Raised for invalid grids or queries outside a grid."""


class TerrainFormatError(TerrainError):
    """Malformed ESRI ASCII grid content."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class GeoPoint:
    x: float
    y: float
    alt: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "alt"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not all(math.isfinite(v) for v in (self.x, self.y, self.alt)):
            raise TerrainError(f"non-finite coordinate in {self!r}")


@dataclass(frozen=True, eq=False)
class TerrainGrid:
    """Immutable elevation raster.

    ``elevations`` has shape ``(rows, cols)`` and is indexed ``[row, col]`` with
    row 0 at the bottom of the grid.
    """

    elevations: np.ndarray
    cell_size: float
    origin_x: float = 0.0
    origin_y: float = 0.0
    nodata_value: float = DEFAULT_NODATA
    nodata: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        elev = np.array(self.elevations, dtype=np.float64)
        if elev.ndim != 2:
            raise TerrainError("elevations must be a 2-D array")
        rows, cols = elev.shape
        if rows < 2 or cols < 2:
            raise TerrainError(f"grid must be at least 2x2, got {rows}x{cols}")
        if not self.cell_size > 0:
            raise TerrainError("cell_size must be positive")
        mask = elev == self.nodata_value
        if not np.all(np.isfinite(elev[~mask])):
            raise TerrainError("grid contains non-finite elevations")
        elev.flags.writeable = False
        mask.flags.writeable = False
        for name in ("cell_size", "origin_x", "origin_y", "nodata_value"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "elevations", elev)
        object.__setattr__(self, "nodata", mask)

    @property
    def rows(self) -> int:
        return self.elevations.shape[0]

    @property
    def cols(self) -> int:
        return self.elevations.shape[1]

    @property
    def width(self) -> float:
        return self.cols * self.cell_size

    @property
    def height(self) -> float:
        return self.rows * self.cell_size

    @property
    def center(self) -> tuple[float, float]:
        return self.origin_x + self.width / 2, self.origin_y + self.height / 2

    def contains(self, x, y) -> np.ndarray | bool:
        """True where (x, y) lies inside the outer cell boundary."""
        return (
            (x >= self.origin_x)
            & (x <= self.origin_x + self.width)
            & (y >= self.origin_y)
            & (y <= self.origin_y + self.height)
        )

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(col, row) of the cell containing a point; edges fold into the last cell."""
        col = min(int((x - self.origin_x) // self.cell_size), self.cols - 1)
        row = min(int((y - self.origin_y) // self.cell_size), self.rows - 1)
        return col, row

    def is_nodata_at(self, x: float, y: float) -> bool:
        col, row = self.cell_of(x, y)
        return bool(self.nodata[row, col])

    def sample(self, x, y) -> np.ndarray:
        """Vectorized bilinear elevation; +inf where a weighted neighbor is nodata.

        Points must already be inside the grid extent. Between the outermost cell
        centers and the grid boundary the edge values are extended.
        """
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        fx = np.clip((x - self.origin_x) / self.cell_size - 0.5, 0.0, self.cols - 1)
        fy = np.clip((y - self.origin_y) / self.cell_size - 0.5, 0.0, self.rows - 1)
        i0 = np.minimum(fx.astype(np.intp), self.cols - 2)
        j0 = np.minimum(fy.astype(np.intp), self.rows - 2)
        tx = fx - i0
        ty = fy - j0
        flat = j0 * self.cols + i0
        e = self.elevations.ravel()
        z00 = e.take(flat)
        z10 = e.take(flat + 1)
        z01 = e.take(flat + self.cols)
        z11 = e.take(flat + self.cols + 1)
        bottom = z00 + tx * (z10 - z00)
        top = z01 + tx * (z11 - z01)
        z = bottom + ty * (top - bottom)
        if self.nodata.any():
            m = self.nodata.ravel()
            wx0, wx1, wy0, wy1 = tx < 1, tx > 0, ty < 1, ty > 0
            blocked = (
                (wx0 & wy0 & m.take(flat))
                | (wx1 & wy0 & m.take(flat + 1))
                | (wx0 & wy1 & m.take(flat + self.cols))
                | (wx1 & wy1 & m.take(flat + self.cols + 1))
            )
            z = np.where(blocked, np.inf, z)
        return z


PathLike = Union[str, Path]


def load_terrain(text: str) -> TerrainGrid:
    """Parse ESRI ASCII grid content into a TerrainGrid."""
    lines = text.splitlines()
    header: dict[str, float] = {}
    lineno = 0
    while lineno < len(lines):
        raw = lines[lineno].strip()
        if not raw:
            lineno += 1
            continue
        parts = raw.split()
        key = parts[0].lower()
        if key[0].isdigit() or key[0] in "+-.":
            break
        if len(parts) != 2:
            raise TerrainFormatError(f"expected 'key value' header, got {raw!r}", lineno + 1)
        if key not in _HEADER_KEYS + ("xllcenter", "yllcenter"):
            raise TerrainFormatError(f"unknown header key {parts[0]!r}", lineno + 1)
        try:
            header[key] = float(parts[1])
        except ValueError:
            raise TerrainFormatError(f"non-numeric header value {parts[1]!r}", lineno + 1) from None
        lineno += 1

    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise TerrainFormatError(f"missing header key {key!r}", lineno + 1)
    cols, rows = header["ncols"], header["nrows"]
    if cols != int(cols) or rows != int(rows):
        raise TerrainFormatError("ncols/nrows must be integers", 1)
    cols, rows = int(cols), int(rows)
    cell = header["cellsize"]
    if "xllcorner" in header:
        ox = header["xllcorner"]
    elif "xllcenter" in header:
        ox = header["xllcenter"] - cell / 2
    else:
        raise TerrainFormatError("missing header key 'xllcorner'", lineno + 1)
    if "yllcorner" in header:
        oy = header["yllcorner"]
    elif "yllcenter" in header:
        oy = header["yllcenter"] - cell / 2
    else:
        raise TerrainFormatError("missing header key 'yllcorner'", lineno + 1)
    nodata = header.get("nodata_value", DEFAULT_NODATA)

    values = []
    for i in range(lineno, len(lines)):
        tokens = lines[i].split()
        if not tokens:
            continue
        if len(tokens) != cols:
            raise TerrainFormatError(f"expected {cols} values, found {len(tokens)}", i + 1)
        try:
            values.append([float(t) for t in tokens])
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise TerrainFormatError(f"non-numeric value {bad!r}", i + 1) from None
    if len(values) != rows:
        raise TerrainFormatError(f"expected {rows} data rows, found {len(values)}", len(lines))
    # file rows run north to south
    elev = np.array(values[::-1], dtype=np.float64)
    try:
        return TerrainGrid(elev, cell, ox, oy, nodata)
    except TerrainError as exc:
        raise TerrainFormatError(str(exc), 1) from None


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def save_terrain(grid: TerrainGrid) -> str:
    """Serialize to ESRI ASCII; values are written with shortest round-trip repr."""
    out = [
        f"ncols {grid.cols}",
        f"nrows {grid.rows}",
        f"xllcorner {grid.origin_x!r}",
        f"yllcorner {grid.origin_y!r}",
        f"cellsize {grid.cell_size!r}",
        f"nodata_value {grid.nodata_value!r}",
    ]
    for row in grid.elevations[::-1]:
        out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def read_terrain(path: PathLike) -> TerrainGrid:
    return load_terrain(Path(path).read_text())


def write_terrain(grid: TerrainGrid, path: PathLike) -> None:
    Path(path).write_text(save_terrain(grid))


def _diamond_square(size_exp: int, rng: np.random.Generator, roughness: float) -> np.ndarray:
    n = 2**size_exp + 1
    z = np.zeros((n, n))
    z[0, 0], z[0, -1], z[-1, 0], z[-1, -1] = rng.uniform(-1, 1, 4)
    step = n - 1
    scale = 1.0
    while step > 1:
        half = step // 2
        # diamond step: centers of squares
        c = z[0:-1:step, 0:-1:step] + z[step::step, 0:-1:step]
        c = c + z[0:-1:step, step::step] + z[step::step, step::step]
        z[half::step, half::step] = c / 4 + rng.uniform(-scale, scale, c.shape)
        # square step: edge midpoints, averaging the available 3 or 4 neighbors
        for r0 in (0, half):
            c0 = half if r0 == 0 else 0
            rr, cc = np.meshgrid(np.arange(r0, n, step), np.arange(c0, n, step), indexing="ij")
            total = np.zeros(rr.shape)
            count = np.zeros(rr.shape)
            for dr, dc in ((-half, 0), (half, 0), (0, -half), (0, half)):
                r2, c2 = rr + dr, cc + dc
                ok = (r2 >= 0) & (r2 < n) & (c2 >= 0) & (c2 < n)
                total[ok] += z[r2[ok], c2[ok]]
                count[ok] += 1
            z[rr, cc] = total / count + rng.uniform(-scale, scale, rr.shape)
        step = half
        scale *= roughness
    return z


def generate_synthetic_terrain(
    seed: int,
    rows: int,
    cols: int,
    cell_size: float,
    max_relief: float,
    origin_x: float = 0.0,
    origin_y: float = 0.0,
    roughness: float = 0.55,
) -> TerrainGrid:
    """Diamond-square relief rescaled to ``[0, max_relief]``; deterministic per seed."""
    if rows < 2 or cols < 2:
        raise TerrainError("rows and cols must be >= 2")
    if max_relief < 0:
        raise TerrainError("max_relief must be nonnegative")
    rng = np.random.default_rng(seed)
    size_exp = max(1, math.ceil(math.log2(max(rows, cols) - 1)))
    z = _diamond_square(size_exp, rng, roughness)[:rows, :cols]
    lo, hi = z.min(), z.max()
    if max_relief == 0 or hi == lo:
        elev = np.zeros((rows, cols))
    else:
        elev = (z - lo) / (hi - lo) * max_relief
    return TerrainGrid(elev, cell_size, origin_x, origin_y)


def elevation_at(grid: TerrainGrid, x: float, y: float) -> float:
    """Bilinear elevation at a point inside the grid extent."""
    if not grid.contains(x, y):
        raise TerrainError(f"point ({x}, {y}) outside grid extent")
    z = float(grid.sample(x, y))
    if not math.isfinite(z):
        raise TerrainError(f"nodata neighborhood at ({x}, {y})")
    return z


def curvature_drop(distance):
    """Apparent lowering of terrain at a horizontal distance: d^2 / (2 R_e)."""
    return np.square(distance) / (2.0 * EARTH_RADIUS_M)


def ray_fractions(distance: float, cell_size: float) -> np.ndarray:
    """Interior sample fractions along a ray, spaced at most half a cell apart."""
    m = math.ceil(distance / (cell_size / 2))
    if m <= 1:
        return np.empty(0)
    return np.arange(1, m) / m


def line_of_sight(
    grid: TerrainGrid,
    observer: GeoPoint,
    ground_target: GeoPoint,
    curvature: bool = True,
) -> bool:
    """True iff no terrain sample between the endpoints reaches the sight line.

    Curvature is applied in the observer's frame: terrain (and the target) at
    horizontal distance d from the observer is lowered by ``curvature_drop(d)``.
    """
    for p in (observer, ground_target):
        if not grid.contains(p.x, p.y):
            raise TerrainError(f"point ({p.x}, {p.y}) outside grid extent")
    dx = observer.x - ground_target.x
    dy = observer.y - ground_target.y
    dist = math.hypot(dx, dy)
    s = ray_fractions(dist, grid.cell_size)
    if s.size == 0:
        return True
    terrain = grid.sample(ground_target.x + s * dx, ground_target.y + s * dy)
    z_target = ground_target.alt
    if curvature:
        terrain = terrain - curvature_drop((1 - s) * dist)
        z_target = z_target - float(curvature_drop(dist))
    sight = z_target + s * (observer.alt - z_target)
    return bool(np.all(sight > terrain))
