"""Dubins paths between oriented poses, lifted to 3D under a climb-angle limit.

The horizontal path is the shortest of the six classic words. Altitude changes
linearly with horizontal distance. When the required flight-path angle is too
steep, full loiter circles are flown at the final turn until the climb fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2 * math.pi
WORDS = ("LSL", "RSR", "LSR", "RSL", "RLR", "LRL")
_EPS = 1e-9


def _mod2pi(a: float) -> float:
    return float(a % TWO_PI)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    alt: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "alt"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not all(math.isfinite(v) for v in (self.x, self.y, self.alt, self.heading)):
            raise ValueError(f"non-finite pose {self!r}")
        object.__setattr__(self, "heading", _mod2pi(self.heading))


@dataclass(frozen=True)
class VehicleLimits:
    min_turn_radius: float = 500.0
    max_flight_path_angle: float = math.radians(10.0)
    speed: float = 100.0

    def __post_init__(self):
        if not (self.min_turn_radius > 0 and self.speed > 0 and self.max_flight_path_angle > 0):
            raise ValueError("vehicle limits must be positive")
        if self.max_flight_path_angle >= math.pi / 2:
            raise ValueError("max_flight_path_angle must be below pi/2")


@dataclass(frozen=True)
class DubinsPath2D:
    word: str
    lengths: tuple[float, float, float]
    radius: float

    @property
    def horizontal_length(self) -> float:
        return sum(self.lengths)


@dataclass(frozen=True)
class DubinsPath3D:
    word: str
    lengths: tuple[float, float, float]
    radius: float
    horizontal_length: float
    spiral_turns: int
    total_length: float
    alt_start: float
    alt_end: float

    @property
    def climb_ratio(self) -> float:
        if self.total_length == 0:
            return 0.0 if self.alt_end == self.alt_start else math.inf
        return abs(self.alt_end - self.alt_start) / self.total_length


def _word_params(word: str, d: float, a: float, b: float):
    """Normalized (t, p, q) for one word, or None when infeasible."""
    sa, sb, ca, cb = math.sin(a), math.sin(b), math.cos(a), math.cos(b)
    cab = math.cos(a - b)
    if word == "LSL":
        p2 = 2 + d * d - 2 * cab + 2 * d * (sa - sb)
        if p2 < -_EPS:
            return None
        p2 = max(p2, 0.0)
        th = math.atan2(cb - ca, d + sa - sb)
        return _mod2pi(th - a), math.sqrt(p2), _mod2pi(b - th)
    if word == "RSR":
        p2 = 2 + d * d - 2 * cab + 2 * d * (sb - sa)
        if p2 < -_EPS:
            return None
        p2 = max(p2, 0.0)
        th = math.atan2(ca - cb, d - sa + sb)
        return _mod2pi(a - th), math.sqrt(p2), _mod2pi(th - b)
    if word == "LSR":
        p2 = -2 + d * d + 2 * cab + 2 * d * (sa + sb)
        if p2 < -_EPS:
            return None
        p2 = max(p2, 0.0)
        p = math.sqrt(p2)
        th = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        return _mod2pi(th - a), p, _mod2pi(th - b)
    if word == "RSL":
        p2 = -2 + d * d + 2 * cab - 2 * d * (sa + sb)
        if p2 < -_EPS:
            return None
        p2 = max(p2, 0.0)
        p = math.sqrt(p2)
        th = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        return _mod2pi(a - th), p, _mod2pi(b - th)
    if word == "RLR":
        c = (6 - d * d + 2 * cab + 2 * d * (sa - sb)) / 8
        if abs(c) > 1 + _EPS:
            return None
        c = min(1.0, max(-1.0, c))
        p = _mod2pi(TWO_PI - math.acos(c))
        t = _mod2pi(a - math.atan2(ca - cb, d - sa + sb) + p / 2)
        return t, p, _mod2pi(a - b - t + p)
    if word == "LRL":
        c = (6 - d * d + 2 * cab + 2 * d * (sb - sa)) / 8
        if abs(c) > 1 + _EPS:
            return None
        c = min(1.0, max(-1.0, c))
        p = _mod2pi(TWO_PI - math.acos(c))
        t = _mod2pi(-a - math.atan2(ca - cb, d + sa - sb) + p / 2)
        return t, p, _mod2pi(b - a - t + p)
    raise ValueError(f"unknown word {word!r}")


def _clamp_arc(v: float) -> float:
    if v < _EPS or v > TWO_PI - _EPS:
        return 0.0
    return v


def dubins_candidates(start: Pose, end: Pose, r_min: float) -> dict[str, DubinsPath2D]:
    """Every feasible word between two poses."""
    if not r_min > 0:
        raise ValueError("r_min must be positive")
    dx, dy = end.x - start.x, end.y - start.y
    d = math.hypot(dx, dy) / r_min
    phi = math.atan2(dy, dx) if d > 0 else 0.0
    a = _mod2pi(start.heading - phi)
    b = _mod2pi(end.heading - phi)
    out = {}
    for word in WORDS:
        params = _word_params(word, d, a, b)
        if params is None:
            continue
        t, p, q = params
        t, q = _clamp_arc(t), _clamp_arc(q)
        p = _clamp_arc(p) if word[1] != "S" else (0.0 if p < _EPS else p)
        out[word] = DubinsPath2D(word, (t * r_min, p * r_min, q * r_min), r_min)
    return out


def dubins_shortest_2d(start: Pose, end: Pose, r_min: float) -> DubinsPath2D:
    """Shortest word; earlier words in WORDS win near-ties."""
    best = None
    for path in dubins_candidates(start, end, r_min).values():
        if best is None or path.horizontal_length < best.horizontal_length - _EPS:
            best = path
    return best


def lift_to_3d(path: DubinsPath2D, alt_start: float, alt_end: float, limits: VehicleLimits) -> DubinsPath3D:
    """Add the fewest loiter circles so |climb| <= tan(gamma_max) * length."""
    if not math.isclose(path.radius, limits.min_turn_radius):
        raise ValueError("path radius differs from the vehicle turn radius")
    h = path.horizontal_length
    dz = abs(alt_end - alt_start)
    slope = math.tan(limits.max_flight_path_angle)
    circle = TWO_PI * path.radius
    k = 0
    if dz > slope * h:
        k = max(0, math.ceil((dz / slope - h) / circle))
        while k > 0 and dz <= slope * (h + (k - 1) * circle):
            k -= 1
        while dz > slope * (h + k * circle):
            k += 1
    return DubinsPath3D(path.word, path.lengths, path.radius, h, k, h + k * circle, alt_start, alt_end)


def _advance(x, y, th, kind: str, dist: float, r: float):
    """Pose after flying ``dist`` along a piece of type L, R or S."""
    if kind == "S":
        return x + dist * math.cos(th), y + dist * math.sin(th), th
    phi = dist / r
    if kind == "L":
        cx, cy = x - r * math.sin(th), y + r * math.cos(th)
        th2 = th + phi
        return cx + r * math.sin(th2), cy - r * math.cos(th2), th2
    cx, cy = x + r * math.sin(th), y - r * math.cos(th)
    th2 = th - phi
    return cx - r * math.sin(th2), cy + r * math.cos(th2), th2


def _pieces(path) -> list[tuple[str, float]]:
    pieces = list(zip(path.word, path.lengths))
    turns = getattr(path, "spiral_turns", 0)
    if turns:
        pieces.append((path.word[2], turns * TWO_PI * path.radius))
    return pieces


def path_end(path, start: Pose) -> Pose:
    """Closed-form end pose of a 2D or 3D path flown from ``start``."""
    x, y, th = start.x, start.y, start.heading
    for kind, length in _pieces(path):
        x, y, th = _advance(x, y, th, kind, length, path.radius)
    alt = getattr(path, "alt_end", start.alt)
    return Pose(x, y, alt, th)


def sample_path(path, start: Pose, spacing: float) -> list[Pose]:
    """Poses every <= ``spacing`` meters of horizontal travel, endpoints included."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    pieces = _pieces(path)
    total = sum(length for _, length in pieces)
    alt0 = getattr(path, "alt_start", start.alt)
    alt1 = getattr(path, "alt_end", start.alt)
    n = max(1, math.ceil(total / spacing - 1e-9))
    out = []
    # piece start states
    starts = []
    x, y, th = start.x, start.y, start.heading
    acc = 0.0
    for kind, length in pieces:
        starts.append((acc, x, y, th))
        x, y, th = _advance(x, y, th, kind, length, path.radius)
        acc += length
    for i in range(n + 1):
        s = total * i / n
        idx = len(pieces) - 1
        for j, (s0, *_rest) in enumerate(starts):
            if s0 <= s:
                idx = j
        s0, px, py, pth = starts[idx] if pieces else (0.0, start.x, start.y, start.heading)
        if pieces:
            kind, length = pieces[idx]
            px, py, pth = _advance(px, py, pth, kind, min(s - s0, length), path.radius)
        if i == 0:
            px, py, pth = start.x, start.y, start.heading
        frac = s / total if total > 0 else 1.0
        out.append(Pose(px, py, alt0 + (alt1 - alt0) * frac, pth))
    end = path_end(path, start)
    out[-1] = Pose(end.x, end.y, alt1, end.heading)
    return out
