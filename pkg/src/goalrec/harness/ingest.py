"""Ingestion of recorded pedestrian trajectories onto a grid.

Input is a CSV of ``agent_id, frame, x, y`` rows sorted by agent and frame.
World coordinates are mapped affinely to cells, repeated cells collapse,
and gaps between consecutive samples are bridged so that every ingested
trajectory is 4-connected.
"""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from dataclasses import astuple, dataclass, field
from pathlib import Path

from ..gridworld import Cell, GridMap, is_valid_trajectory
from ..planning import PlanningError, astar_path
from .datasets import ExampleRecord


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class GoalRegion:
    name: str
    row_min: int
    row_max: int
    col_min: int
    col_max: int
    centroid_row: int
    centroid_col: int

    def contains(self, cell) -> bool:
        return self.row_min <= cell[0] <= self.row_max and self.col_min <= cell[1] <= self.col_max

    @property
    def centroid(self) -> Cell:
        return Cell(self.centroid_row, self.centroid_col)


_REGION_KEYS = ("name", "rowMin", "rowMax", "colMin", "colMax", "centroidRow", "centroidCol")


def load_goal_regions(path) -> list[GoalRegion]:
    """Read a JSON list of ``{name, rowMin, rowMax, colMin, colMax, centroidRow, centroidCol}``."""
    try:
        return [GoalRegion(*(rec[k] for k in _REGION_KEYS)) for rec in json.loads(Path(path).read_text())]
    except (KeyError, TypeError) as err:
        raise IngestError(f"bad goal specification {path}: {err}") from None


def save_goal_regions(regions, path) -> None:
    recs = [dict(zip(_REGION_KEYS, astuple(r))) for r in regions]
    Path(path).write_text(json.dumps(recs, indent=1) + "\n")


@dataclass
class IngestResult:
    train: list[ExampleRecord]
    test: list[ExampleRecord]
    dropped: int = 0
    dropped_agents: list = field(default_factory=list)


def read_samples(text: str) -> dict[str, list[tuple[int, float, float]]]:
    """Group CSV rows by agent; a header row is optional."""
    by_agent: dict[str, list] = {}
    order = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or all(not v.strip() for v in row):
            continue
        if len(row) != 4:
            raise IngestError(f"line {lineno}: expected 4 fields (agent_id, frame, x, y), got {len(row)}")
        try:
            frame, x, y = int(row[1]), float(row[2]), float(row[3])
        except ValueError:
            if lineno == 1:
                continue
            raise IngestError(f"line {lineno}: malformed row {row!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise IngestError(f"line {lineno}: non-finite coordinate")
        agent = row[0].strip()
        if agent not in by_agent:
            by_agent[agent] = []
            order.append(agent)
        by_agent[agent].append((frame, x, y))
    return {a: by_agent[a] for a in order}


def to_cell(x: float, y: float, m: GridMap, scale: float, origin=(0.0, 0.0)) -> Cell:
    """World point to grid cell: rows follow y, columns follow x; clipped to the map."""
    r = math.floor((y - origin[1]) * scale)
    c = math.floor((x - origin[0]) * scale)
    return Cell(min(max(r, 0), m.height - 1), min(max(c, 0), m.width - 1))


def l_connector(a, b) -> list[Cell]:
    """Cells strictly after ``a`` up to ``b``: along the rows first, then the columns."""
    out = []
    r, c = a
    step = 1 if b[0] > r else -1
    while r != b[0]:
        r += step
        out.append(Cell(r, c))
    step = 1 if b[1] > c else -1
    while c != b[1]:
        c += step
        out.append(Cell(r, c))
    return out


def bridge(m: GridMap, a, b) -> list[Cell] | None:
    """Connect two passable cells; falls back to a shortest path when the
    L-shaped connector crosses an obstacle. ``None`` if unreachable."""
    link = l_connector(a, b)
    if all(m.passable[c] for c in link):
        return link
    try:
        return astar_path(m, a, b, "l1")[1:]
    except PlanningError:
        return None


def rasterize(m: GridMap, samples, scale: float, origin=(0.0, 0.0)) -> list[Cell]:
    cells: list[Cell] = []
    for _, x, y in samples:
        cell = to_cell(x, y, m, scale, origin)
        if not m.passable[cell]:
            continue
        if not cells:
            cells.append(cell)
        elif cell != cells[-1]:
            link = bridge(m, cells[-1], cell)
            if link is not None:
                cells.extend(link)
    return cells


def is_test_agent(agent_id: str, test_fraction: float = 0.2) -> bool:
    return zlib.crc32(str(agent_id).encode()) % 1000 < round(test_fraction * 1000)


def ingest_trajectories(csv_text: str, m: GridMap, regions: list[GoalRegion], scale: float,
                        origin=(0.0, 0.0), test_fraction: float = 0.2) -> IngestResult:
    """Turn recorded trajectories into labelled examples.

    The label is the goal region holding an agent's final cell; agents that
    end outside every region are dropped and counted. Agents go to the test
    split by a hash of their id (``test_fraction`` of them on average).
    """
    if not regions:
        raise IngestError("goal specification is empty")
    goals = [r.centroid for r in regions]
    for r in regions:
        if not m.is_passable(r.centroid):
            raise IngestError(f"centroid of goal region {r.name!r} is not passable")
    result = IngestResult([], [])
    for agent, samples in read_samples(csv_text).items():
        samples.sort(key=lambda s: s[0])
        cells = rasterize(m, samples, scale, origin)
        label = next((i for i, r in enumerate(regions) if cells and r.contains(cells[-1])), None)
        if label is None:
            result.dropped += 1
            result.dropped_agents.append(agent)
            continue
        assert is_valid_trajectory(m, cells)
        rec = ExampleRecord(m.name, m.shape, goals, cells[0], label, cells,
                            {"source": "ingest", "agent": agent, "scale": scale})
        (result.test if is_test_agent(agent, test_fraction) else result.train).append(rec)
    return result
