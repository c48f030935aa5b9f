"""Waypoint sequencing: Euclidean TSP with a fixed depot.

Matrix index 0 is the depot and indices 1..n are waypoints. A ``Tour`` orders
matrix indices 1..n, and ``TargetSet.ids`` maps them back to identifiers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .terrain import GeoPoint

MAX_EXACT = 18
SOLVERS = ("exact", "nearest", "farthest", "random", "christofides", "2opt")


@dataclass(frozen=True)
class Target:
    id: int
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))


@dataclass(frozen=True)
class TargetSet:
    depot: GeoPoint
    waypoints: tuple[Target, ...]

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        if not self.waypoints:
            raise ValueError("target set needs at least one waypoint")
        ids = [w.id for w in self.waypoints]
        if len(set(ids)) != len(ids) or 0 in ids:
            raise ValueError("waypoint ids must be unique and nonzero (0 is the depot)")
        if not all(math.isfinite(v) for w in self.waypoints for v in (w.x, w.y)):
            raise ValueError("non-finite waypoint coordinate")

    @property
    def n(self) -> int:
        return len(self.waypoints)

    @property
    def ids(self) -> list[int]:
        return [0] + [w.id for w in self.waypoints]

    def coords(self) -> np.ndarray:
        """(n+1, 2) array, depot first."""
        return np.array([[self.depot.x, self.depot.y]] + [[w.x, w.y] for w in self.waypoints])


@dataclass(frozen=True)
class Tour:
    order: tuple[int, ...]
    closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))
        if sorted(self.order) != list(range(1, len(self.order) + 1)):
            raise ValueError(f"tour {self.order} is not a permutation of 1..n")


def distance_matrix(ts: TargetSet | np.ndarray) -> np.ndarray:
    pts = ts.coords() if isinstance(ts, TargetSet) else np.asarray(ts, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    m = np.hypot(diff[..., 0], diff[..., 1])
    return (m + m.T) / 2


def tour_length(m: np.ndarray, tour: Tour, closed: bool | None = None) -> float:
    """Sum of legs; closed tours add depot->first and last->depot."""
    if len(tour.order) != m.shape[0] - 1:
        raise ValueError("tour size does not match matrix")
    closed = tour.closed if closed is None else closed
    seq = [0, *tour.order, 0] if closed else list(tour.order)
    return float(sum(m[a, b] for a, b in zip(seq, seq[1:])))


def _cycle_length(m, cycle) -> float:
    return float(sum(m[a, b] for a, b in zip(cycle, cycle[1:] + cycle[:1])))


def solve_exact(m: np.ndarray) -> Tour:
    """Held-Karp dynamic program over subsets; closed tour through the depot."""
    n = m.shape[0] - 1
    if n > MAX_EXACT:
        raise ValueError(f"exact solver limited to n <= {MAX_EXACT}, got {n}")
    if n == 1:
        return Tour((1,))
    d = m[1:, 1:]
    full = 1 << n
    cost = np.full((full, n), np.inf)
    parent = np.full((full, n), -1, dtype=np.int64)
    for j in range(n):
        cost[1 << j, j] = m[0, j + 1]
    masks = np.arange(full)
    popcount = np.zeros(full, dtype=np.int64)
    for j in range(n):
        popcount += (masks >> j) & 1
    for size in range(2, n + 1):
        layer = masks[popcount == size]
        for j in range(n):
            sub = layer[(layer >> j) & 1 == 1]
            prev = sub ^ (1 << j)
            cand = cost[prev] + d[:, j]
            k = np.argmin(cand, axis=1)
            cost[sub, j] = cand[np.arange(sub.size), k]
            parent[sub, j] = k
    closing = cost[full - 1] + m[1:, 0]
    last = int(np.argmin(closing))
    order = []
    mask = full - 1
    while last >= 0:
        order.append(last + 1)
        nxt = int(parent[mask, last])
        mask ^= 1 << last
        last = nxt
    return Tour(tuple(reversed(order)))


def solve_insertion(m: np.ndarray, variant: str = "nearest", seed: int = 0) -> Tour:
    """Insertion construction from the depot with cheapest-position insertion."""
    if variant not in ("nearest", "farthest", "random"):
        raise ValueError(f"unknown insertion variant {variant!r}")
    n = m.shape[0] - 1
    rng = np.random.default_rng(seed)
    cycle = [0]
    remaining = list(range(1, n + 1))
    # distance from each node to the current tour
    near = m[0].copy()
    random_order = list(rng.permutation(remaining)) if variant == "random" else None
    while remaining:
        if variant == "random":
            city = int(random_order.pop(0))
        else:
            cand = np.array(remaining)
            vals = near[cand]
            pick = int(np.argmin(vals)) if variant == "nearest" else int(np.argmax(vals))
            city = int(cand[pick])
        remaining.remove(city)
        best_pos, best_inc = 1, math.inf
        for pos in range(len(cycle)):
            a, b = cycle[pos], cycle[(pos + 1) % len(cycle)]
            inc = m[a, city] + m[city, b] - m[a, b]
            if inc < best_inc - 1e-12:
                best_pos, best_inc = pos + 1, inc
        cycle.insert(best_pos, city)
        near = np.minimum(near, m[city])
    return Tour(tuple(cycle[1:]))


def _greedy_matching(m, nodes):
    pairs = sorted(
        ((m[a, b], a, b) for i, a in enumerate(nodes) for b in nodes[i + 1 :]),
        key=lambda t: (t[0], t[1], t[2]),
    )
    used, out = set(), []
    for _, a, b in pairs:
        if a not in used and b not in used:
            used.update((a, b))
            out.append((a, b))
    return out


def _exact_matching(m, nodes):
    import networkx as nx

    g = nx.Graph()
    for i, a in enumerate(nodes):
        for b in nodes[i + 1 :]:
            g.add_edge(a, b, weight=float(m[a, b]))
    return sorted(tuple(sorted(e)) for e in nx.min_weight_matching(g))


def _mst_edges(m) -> list[tuple[int, int]]:
    """Prim's algorithm from node 0; ties resolve to the lowest index."""
    n = m.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = m[0].copy()
    link = np.zeros(n, dtype=np.int64)
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        edges.append((int(link[v]), v))
        in_tree[v] = True
        closer = m[v] < best
        best = np.where(closer, m[v], best)
        link = np.where(closer, v, link)
    return edges


def _euler_circuit(n, edges, start=0) -> list[int]:
    """Hierholzer over a multigraph given as an edge list."""
    adj: dict[int, list[tuple[int, int]]] = {v: [] for v in range(n)}
    for eid, (a, b) in enumerate(edges):
        adj[a].append((b, eid))
        adj[b].append((a, eid))
    for v in adj:
        adj[v].sort(reverse=True)
    used = [False] * len(edges)
    stack, circuit = [start], []
    while stack:
        v = stack[-1]
        while adj[v] and used[adj[v][-1][1]]:
            adj[v].pop()
        if adj[v]:
            w, eid = adj[v].pop()
            used[eid] = True
            stack.append(w)
        else:
            circuit.append(stack.pop())
    return circuit[::-1]


def solve_christofides(m: np.ndarray, matching: str = "exact") -> Tour:
    """MST + odd-vertex perfect matching + Eulerian shortcut.

    ``matching="greedy"`` gives a cheaper Christofides-like variant without the
    1.5 approximation guarantee.
    """
    n = m.shape[0]
    if n <= 3:
        return Tour(tuple(range(1, n)))
    mst = _mst_edges(m)
    degree = np.zeros(n, dtype=np.int64)
    for a, b in mst:
        degree[a] += 1
        degree[b] += 1
    odd = [int(v) for v in np.flatnonzero(degree % 2 == 1)]
    if matching == "exact":
        pairs = _exact_matching(m, odd)
    elif matching == "greedy":
        pairs = _greedy_matching(m, odd)
    else:
        raise ValueError(f"unknown matching {matching!r}")
    circuit = _euler_circuit(n, mst + list(pairs))
    seen, order = set(), []
    for v in circuit:
        if v not in seen:
            seen.add(v)
            order.append(v)
    return Tour(tuple(v for v in order if v != 0))


def improve_2opt(m: np.ndarray, tour: Tour) -> Tour:
    """Best-improvement 2-opt on the closed cycle until no exchange helps."""
    cycle = [0, *tour.order]
    n = len(cycle)
    if n < 4:
        return Tour(tour.order, tour.closed)
    c = np.array(cycle)
    while True:
        best_gain, best_ij = 1e-10, None
        for i in range(n - 2):
            a, b = c[i], c[i + 1]
            j = np.arange(i + 2, n if i > 0 else n - 1)
            cc, dd = c[j], c[(j + 1) % n]
            gain = m[a, b] + m[cc, dd] - m[a, cc] - m[b, dd]
            k = int(np.argmax(gain))
            if gain[k] > best_gain:
                best_gain, best_ij = gain[k], (i, int(j[k]))
        if best_ij is None:
            break
        i, j = best_ij
        c[i + 1 : j + 1] = c[i + 1 : j + 1][::-1]
    return Tour(tuple(int(v) for v in c[1:]), tour.closed)


def solve(m: np.ndarray, solver: str, seed: int = 0) -> Tour:
    """Dispatch by name; ``2opt`` is farthest insertion polished by 2-opt."""
    if solver == "exact":
        return solve_exact(m)
    if solver in ("nearest", "farthest", "random"):
        return solve_insertion(m, solver, seed)
    if solver == "christofides":
        return solve_christofides(m)
    if solver == "christofides-greedy":
        return solve_christofides(m, matching="greedy")
    if solver == "2opt":
        return improve_2opt(m, solve_insertion(m, "farthest", seed))
    raise ValueError(f"unknown solver {solver!r}; choose from {', '.join(SOLVERS)}")


def read_targets_csv(path) -> TargetSet:
    """Targets CSV with header id,x,y; the row with id 0 is the depot."""
    depot = None
    wps = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            tid, x, y = int(row["id"]), float(row["x"]), float(row["y"])
            if tid == 0:
                depot = GeoPoint(x, y)
            else:
                wps.append(Target(tid, x, y))
    if depot is None:
        raise ValueError(f"{path}: no depot row (id 0)")
    return TargetSet(depot, tuple(wps))


def write_targets_csv(ts: TargetSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y"])
        w.writerow([0, repr(float(ts.depot.x)), repr(float(ts.depot.y))])
        for t in ts.waypoints:
            w.writerow([t.id, repr(float(t.x)), repr(float(t.y))])


def write_tour_csv(ts: TargetSet, tour: Tour, path) -> None:
    ids = ts.ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["position", "id"])
        for pos, idx in enumerate(tour.order):
            w.writerow([pos, ids[idx]])


def read_tour_csv(ts: TargetSet, path) -> Tour:
    index = {tid: i for i, tid in enumerate(ts.ids)}
    with open(path, newline="") as fh:
        rows = sorted((int(r["position"]), int(r["id"])) for r in csv.DictReader(fh))
    return Tour(tuple(index[tid] for _, tid in rows))
