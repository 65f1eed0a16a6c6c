"""Planners and cost models for 4-connected grids.

Cost fields hold the optimal remaining cost from every cell to one goal.
They come from breadth-first search under uniform costs and from a
priority-queue search over reversed transitions once the model is
corrupted. Randomness (corrupted transition costs, heuristic inflation) is
a pure hash of the endpoints and a seed, so repeated queries agree no
matter which planner asks first.
"""

from __future__ import annotations

import heapq
import math
import struct
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .gridworld import Cell, GridMap, NavProblem, adjacency

INF = math.inf
_MASK64 = (1 << 64) - 1

# stream tags keep the corruption and heuristic draws independent
_TAG_CORRUPT = 0x51
_TAG_HEURISTIC = 0x7B


class PlanningError(ValueError):
    pass


def _splitmix(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def hash_uniform(seed: int, *values: int) -> float:
    """Deterministic uniform draw in [0, 1) from a seed and integer keys."""
    h = _splitmix(seed & _MASK64)
    for v in values:
        h = _splitmix(h ^ (v & _MASK64))
    return (h >> 11) * (1.0 / (1 << 53))


def l1(s, g) -> float:
    return float(abs(s[0] - g[0]) + abs(s[1] - g[1]))


def l2(s, g) -> float:
    return math.hypot(s[0] - g[0], s[1] - g[1])


HEURISTICS: dict[str, Callable] = {"l1": l1, "l2": l2}


def get_heuristic(h) -> Callable:
    if callable(h):
        return h
    try:
        return HEURISTICS[h.lower()]
    except KeyError:
        raise ValueError(f"unknown heuristic {h!r}; expected one of {sorted(HEURISTICS)}") from None


@dataclass(frozen=True)
class CorruptionSpec:
    """Erroneous-model settings: with probability ``eps_prime`` a transition
    costs an extra amount drawn uniformly from (0, delta_prime_max]."""

    eps_prime: float
    delta_prime_max: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eps_prime <= 1.0:
            raise ValueError(f"eps_prime must lie in [0, 1], got {self.eps_prime}")
        if not self.delta_prime_max > 0:
            raise ValueError("delta_prime_max must be positive")


@dataclass(frozen=True)
class CostModel:
    base: float = 1.0
    corruption: CorruptionSpec | None = None

    @property
    def is_uniform(self) -> bool:
        return self.corruption is None or self.corruption.eps_prime == 0.0

    def step_cost(self, a, b) -> float:
        """Cost of the directed move ``a -> b`` (cells assumed adjacent)."""
        if self.is_uniform:
            return self.base
        spec = self.corruption
        key = (a[0], a[1], b[0], b[1])
        if hash_uniform(spec.seed, _TAG_CORRUPT, 0, *key) >= spec.eps_prime:
            return self.base
        u = hash_uniform(spec.seed, _TAG_CORRUPT, 1, *key)
        return self.base + (1.0 - u) * spec.delta_prime_max


UNIFORM = CostModel()


def corrupt_model(base: CostModel, spec: CorruptionSpec) -> CostModel:
    return CostModel(base=base.base, corruption=spec)


@dataclass(frozen=True)
class EpsHeuristic:
    """Heuristic that is inflated by a random amount with probability ``eps``."""

    inner: str = "l1"
    eps: float = 0.0
    delta_max: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")
        if not self.delta_max > 0:
            raise ValueError("delta_max must be positive")

    def __call__(self, s, g) -> float:
        value = get_heuristic(self.inner)(s, g)
        if self.eps == 0.0:
            return value
        key = (s[0], s[1], g[0], g[1])
        if hash_uniform(self.seed, _TAG_HEURISTIC, 0, *key) >= self.eps:
            return value
        u = hash_uniform(self.seed, _TAG_HEURISTIC, 1, *key)
        return value + (1.0 - u) * self.delta_max


def eps_heuristic_eval(h: EpsHeuristic, s, g) -> float:
    return h(s, g)


# -- edge tables -------------------------------------------------------------

@lru_cache(maxsize=256)
def _edges(m: GridMap, model: CostModel):
    """Outgoing and incoming ``(neighbour, cost)`` tuples per flat cell index."""
    adj = adjacency(m)
    w = m.width
    out_edges = []
    for u, nbrs in enumerate(adj):
        a = (u // w, u % w)
        out_edges.append(tuple((v, model.step_cost(a, (v // w, v % w))) for v in nbrs))
    in_edges = [[] for _ in adj]
    for u, edges in enumerate(out_edges):
        for v, cost in edges:
            in_edges[v].append((u, cost))
    return out_edges, [tuple(e) for e in in_edges]


def _bfs(adj, src: int, n: int) -> list:
    dist = [INF] * n
    dist[src] = 0
    queue = deque([src])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in adj[u]:
            if dist[v] == INF:
                dist[v] = du
                queue.append(v)
    return dist


def _dijkstra(edges, src: int, n: int, banned: tuple[int, int] | None = None) -> list:
    dist = [INF] * n
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, cost in edges[u]:
            if banned is not None and banned[0] == u and banned[1] == v:
                continue
            nd = d + cost
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _to_array(m: GridMap, dist) -> np.ndarray:
    arr = np.asarray(dist, dtype=float).reshape(m.shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CostField:
    """Optimal costs between every cell and a fixed cell (``inf`` if unreachable).

    ``direction`` is ``"to"`` for remaining costs c(s, goal) and ``"from"``
    for costs c(goal, s) out of a source cell.
    """

    goal: Cell
    costs: np.ndarray
    direction: str = "to"

    def __getitem__(self, cell) -> float:
        return float(self.costs[cell[0], cell[1]])


def cost_field(m: GridMap, goal, model: CostModel = UNIFORM) -> CostField:
    """Remaining optimal cost from every cell to ``goal``."""
    return _field(m, Cell(*goal), model, "to")


def source_field(m: GridMap, source, model: CostModel = UNIFORM) -> CostField:
    """Optimal cost from ``source`` to every cell (forward transitions)."""
    return _field(m, Cell(*source), model, "from")


@lru_cache(maxsize=20000)
def _field(m: GridMap, cell: Cell, model: CostModel, direction: str) -> CostField:
    if not m.is_passable(cell):
        raise PlanningError(f"cell {tuple(cell)} is blocked or outside the map")
    n = m.height * m.width
    src = cell[0] * m.width + cell[1]
    if model.is_uniform:
        dist = _bfs(adjacency(m), src, n)
        if model.base != 1.0:
            dist = [d * model.base for d in dist]
    else:
        out_edges, in_edges = _edges(m, model)
        dist = _dijkstra(in_edges if direction == "to" else out_edges, src, n)
    return CostField(cell, _to_array(m, dist), direction)


def cost_fields(m: GridMap, goals: Sequence, model: CostModel = UNIFORM) -> list[CostField]:
    return [cost_field(m, g, model) for g in goals]


def clear_caches() -> None:
    _field.cache_clear()
    _edges.cache_clear()


def path_cost(traj: Sequence, model: CostModel = UNIFORM) -> float:
    """Model cost of the moves along ``traj``."""
    if model.is_uniform:
        return model.base * (len(traj) - 1)
    return float(sum(model.step_cost(a, b) for a, b in zip(traj[:-1], traj[1:])))


def shortest_from(m: GridMap, source, model: CostModel = UNIFORM,
                  banned: tuple | None = None) -> np.ndarray:
    """Forward optimal costs from ``source``, optionally with one directed
    transition ``(from_cell, to_cell)`` removed from the graph."""
    w = m.width
    out_edges, _ = _edges(m, model)
    ban = None
    if banned is not None:
        a, b = banned
        ban = (a[0] * w + a[1], b[0] * w + b[1])
    dist = _dijkstra(out_edges, source[0] * w + source[1], m.height * w, ban)
    return np.asarray(dist, dtype=float).reshape(m.shape)


def astar_path(m: GridMap, start, goal, h="l1", model: CostModel = UNIFORM) -> list[Cell]:
    """A* search. Ties on f go to the larger g, then to insertion order."""
    start, goal = Cell(*start), Cell(*goal)
    if not m.is_passable(start) or not m.is_passable(goal):
        raise PlanningError("start and goal must be passable")
    hfun = get_heuristic(h)
    w = m.width
    out_edges, _ = _edges(m, model)
    src, dst = start[0] * w + start[1], goal[0] * w + goal[1]

    g_cost = {src: 0.0}
    parent = {src: -1}
    closed = set()
    counter = 0
    heap = [(hfun(start, goal), -0.0, counter, src)]
    while heap:
        _, neg_g, _, u = heapq.heappop(heap)
        if u in closed:
            continue
        if u == dst:
            path = []
            while u != -1:
                path.append(Cell(u // w, u % w))
                u = parent[u]
            return path[::-1]
        closed.add(u)
        gu = -neg_g
        for v, cost in out_edges[u]:
            if v in closed:
                continue
            gv = gu + cost
            if gv < g_cost.get(v, INF):
                g_cost[v] = gv
                parent[v] = u
                counter += 1
                cell_v = (v // w, v % w)
                heapq.heappush(heap, (gv + hfun(cell_v, goal), -gv, counter, v))
    raise PlanningError(f"goal {tuple(goal)} unreachable from {tuple(start)}")


def generate_suboptimal_path(p: NavProblem, goal_idx: int, eps: float, delta_max: float = 10.0,
                             seed: int = 0, model: CostModel = UNIFORM) -> list[Cell]:
    """Path of an imperfect agent: A* driven by an eps-over-estimating L1 heuristic."""
    h = EpsHeuristic("l1", eps, delta_max, seed)
    return astar_path(p.map, p.start, p.goals[goal_idx], h, model)


# -- cost-field cache files --------------------------------------------------

_MAGIC = b"PCF1"


def save_cost_field(f: CostField, path) -> None:
    h, w = f.costs.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<4I", h, w, f.goal[0], f.goal[1]))
        fh.write(f.costs.astype("<f4").tobytes(order="C"))


def load_cost_field(path) -> CostField:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not a cost-field file (bad magic {data[:4]!r})")
    h, w, gr, gc = struct.unpack("<4I", data[4:20])
    body = data[20:]
    if len(body) != 4 * h * w:
        raise ValueError(f"{path}: expected {h * w} values, file holds {len(body) // 4}")
    costs = np.frombuffer(body, dtype="<f4").astype(float).reshape(h, w)
    costs.setflags(write=False)
    return CostField(Cell(gr, gc), costs)
