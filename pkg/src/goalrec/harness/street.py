"""A synthetic crowded street used in place of recorded pedestrian data.

Walkers enter from one of five exits (a store door and four street ends),
wander through random waypoints and leave through another exit. Positions
are emitted in metres with jitter and uneven sub-sampling, in the CSV
schema read by :func:`goalrec.harness.ingest.ingest_trajectories`.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from ..gridworld import Cell, GridMap
from ..planning import astar_path
from .ingest import GoalRegion

STREET_LAYOUT = """\
######################.....#####
######################.....#####
######################.....#####
######################.....#####
######......##########.....#####
######......##########.....#####
######......##########.....#####
######......##########.....#####
######......##########.....#####
................................
................................
...##...........................
..............#####.............
..............#####......##.....
................................
.......##.......................
................................
........................#####...
........................#####...
###...####..............#####...
#########################.....##
########################.....###
########################.....###
########################.....###"""

STREET_REGIONS = [
    GoalRegion("store", 4, 6, 6, 11, 5, 8),
    GoalRegion("left street", 9, 16, 0, 1, 12, 0),
    GoalRegion("top right street", 0, 2, 22, 26, 1, 24),
    GoalRegion("right street", 9, 16, 30, 31, 12, 31),
    GoalRegion("bottom right street", 21, 23, 24, 28, 22, 26),
]

CELLS_PER_METRE = 2.0


def street_map() -> GridMap:
    rows = STREET_LAYOUT.splitlines()
    return GridMap([[ch == "." for ch in row] for row in rows], name="street")


@dataclass
class StreetScene:
    map: GridMap
    regions: list[GoalRegion]
    csv_text: str
    scale: float = CELLS_PER_METRE


def _region_cell(m: GridMap, region: GoalRegion, rng) -> Cell:
    cells = [Cell(r, c) for r in range(region.row_min, region.row_max + 1)
             for c in range(region.col_min, region.col_max + 1) if m.passable[r, c]]
    return cells[int(rng.integers(len(cells)))]


def _walk(m: GridMap, start: Cell, end: Cell, rng, street_cells) -> list[Cell]:
    points = [start]
    for _ in range(int(rng.choice([0, 1, 1, 2]))):
        points.append(street_cells[int(rng.integers(len(street_cells)))])
    points.append(end)
    path = [start]
    for a, b in zip(points[:-1], points[1:]):
        path.extend(astar_path(m, a, b, "l1")[1:])
    return path


def crowded_street_scene(num_agents: int, seed: int = 0, drop_rate: float = 0.03,
                         jitter: float = 0.2) -> StreetScene:
    """Simulate ``num_agents`` walkers; a ``drop_rate`` share stop mid-street."""
    rng = np.random.default_rng(seed)
    m = street_map()
    regions = STREET_REGIONS
    street_cells = [Cell(r, c) for r in range(9, 17) for c in range(2, 30) if m.passable[r, c]]
    out = io.StringIO()
    out.write("agent_id,frame,x,y\n")
    for agent in range(num_agents):
        src, dst = rng.choice(len(regions), size=2, replace=False)
        start = _region_cell(m, regions[src], rng)
        if rng.random() < drop_rate:
            end = street_cells[int(rng.integers(len(street_cells)))]
        else:
            end = _region_cell(m, regions[dst], rng)
        path = _walk(m, start, end, rng, street_cells)
        frame = int(rng.integers(0, 1000))
        t = 0
        while True:
            cell = path[t]
            last = t == len(path) - 1
            noise = np.zeros(2) if last else rng.normal(0.0, jitter, size=2)
            y = (cell[0] + 0.5 + noise[0]) / CELLS_PER_METRE
            x = (cell[1] + 0.5 + noise[1]) / CELLS_PER_METRE
            out.write(f"{agent},{frame},{x:.4f},{y:.4f}\n")
            if last:
                break
            t = min(t + int(rng.integers(1, 4)), len(path) - 1)
            frame += 10
    return StreetScene(m, list(regions), out.getvalue())
