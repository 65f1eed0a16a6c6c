"""Grid navigation environments: maps, cells, problems and trajectories.

Maps use the MovingAI text format. Terrain is collapsed to a binary
walkable/obstacle mask and the agent moves with unit cost in the four
cardinal directions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

PASSABLE_CHARS = frozenset(".GS")
BLOCKED_CHARS = frozenset("@OTW")

# up, down, left, right
OFFSETS = ((-1, 0), (1, 0), (0, -1), (0, 1))


class MapFormatError(ValueError):
    """Raised for malformed MovingAI map text; carries the offending line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ProblemError(ValueError):
    pass


class Cell(NamedTuple):
    row: int
    col: int


class GridMap:
    """Immutable occupancy grid. ``passable[r, c]`` is True for walkable cells."""

    __slots__ = ("name", "passable", "_key")

    def __init__(self, passable, name: str = "map"):
        grid = np.array(passable, dtype=bool, copy=True)
        if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
            raise ValueError(f"passable must be a non-empty 2-D array, got shape {grid.shape}")
        grid.setflags(write=False)
        object.__setattr__(self, "passable", grid)
        object.__setattr__(self, "name", str(name))
        object.__setattr__(self, "_key", (self.name, grid.shape, grid.tobytes()))

    def __setattr__(self, key, value):
        raise AttributeError("GridMap is immutable")

    @property
    def height(self) -> int:
        return self.passable.shape[0]

    @property
    def width(self) -> int:
        return self.passable.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.passable.shape

    @property
    def num_passable(self) -> int:
        return int(self.passable.sum())

    def in_bounds(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_passable(self, cell) -> bool:
        return self.in_bounds(cell) and bool(self.passable[cell[0], cell[1]])

    def passable_cells(self) -> list[Cell]:
        return [Cell(int(r), int(c)) for r, c in zip(*np.nonzero(self.passable))]

    def is_valid_environment(self) -> bool:
        return self.num_passable > 0

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        return f"GridMap(name={self.name!r}, height={self.height}, width={self.width})"


def parse_map(text: str, name: str = "map") -> GridMap:
    """Parse MovingAI map text into a :class:`GridMap`.

    Errors are reported as :class:`MapFormatError` with 1-based line numbers.
    """
    lines = text.replace("\r", "").split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    def header(idx: int, key: str) -> str:
        if idx >= len(lines):
            raise MapFormatError(f"missing '{key}' header", idx + 1)
        parts = lines[idx].split()
        if not parts or parts[0] != key:
            raise MapFormatError(f"expected '{key}' header, got {lines[idx]!r}", idx + 1)
        if key == "map":
            if len(parts) != 1:
                raise MapFormatError("unexpected tokens after 'map'", idx + 1)
            return ""
        if len(parts) != 2:
            raise MapFormatError(f"malformed '{key}' header {lines[idx]!r}", idx + 1)
        return parts[1]

    header(0, "type")

    def dimension(idx: int, key: str) -> int:
        raw = header(idx, key)
        try:
            value = int(raw)
        except ValueError:
            raise MapFormatError(f"{key} must be an integer, got {raw!r}", idx + 1) from None
        if value <= 0:
            raise MapFormatError(f"{key} must be positive, got {value}", idx + 1)
        return value

    height = dimension(1, "height")
    width = dimension(2, "width")
    header(3, "map")

    body = lines[4:]
    if len(body) != height:
        raise MapFormatError(
            f"expected {height} map rows, found {len(body)}", 4 + min(len(body), height) + 1
        )
    passable = np.zeros((height, width), dtype=bool)
    for r, row in enumerate(body):
        lineno = r + 5
        if len(row) != width:
            raise MapFormatError(f"row has {len(row)} cells, expected {width}", lineno)
        for c, ch in enumerate(row):
            if ch in PASSABLE_CHARS:
                passable[r, c] = True
            elif ch not in BLOCKED_CHARS:
                raise MapFormatError(f"unknown terrain character {ch!r} at column {c}", lineno)
    return GridMap(passable, name=name)


def serialize_map(m: GridMap) -> str:
    rows = ["".join("." if v else "@" for v in row) for row in m.passable]
    return "\n".join(["type octile", f"height {m.height}", f"width {m.width}", "map", *rows]) + "\n"


def load_map(path, name: str | None = None) -> GridMap:
    path = Path(path)
    return parse_map(path.read_text(), name=name or path.stem)


def save_map(m: GridMap, path) -> None:
    Path(path).write_text(serialize_map(m))


def neighbors(m: GridMap, s) -> list[Cell]:
    """Passable 4-neighbours of ``s`` in the order up, down, left, right."""
    r, c = s
    if not m.in_bounds(s):
        raise IndexError(f"cell {tuple(s)} outside {m.height}x{m.width} map")
    grid = m.passable
    h, w = grid.shape
    out = []
    for dr, dc in OFFSETS:
        nr, nc = r + dr, c + dc
        if 0 <= nr < h and 0 <= nc < w and grid[nr, nc]:
            out.append(Cell(nr, nc))
    return out


def adjacency(m: GridMap) -> list[list[tuple[int, ...]]]:
    """Neighbour lists over flat indices ``r * width + c``, same order as :func:`neighbors`.

    Used by the planners' inner loops; cached per map.
    """
    return _adjacency_cached(m)


_ADJ_CACHE: dict = {}


def _adjacency_cached(m: GridMap):
    adj = _ADJ_CACHE.get(m)
    if adj is None:
        h, w = m.shape
        grid = m.passable
        adj = []
        for r in range(h):
            for c in range(w):
                nbrs = []
                if grid[r, c]:
                    for dr, dc in OFFSETS:
                        nr, nc = r + dr, c + dc
                        if 0 <= nr < h and 0 <= nc < w and grid[nr, nc]:
                            nbrs.append(nr * w + nc)
                adj.append(tuple(nbrs))
        if len(_ADJ_CACHE) > 512:
            _ADJ_CACHE.clear()
        _ADJ_CACHE[m] = adj
    return adj


def reachable_mask(m: GridMap, source) -> np.ndarray:
    """Boolean mask of cells reachable from ``source`` (flood fill)."""
    mask = np.zeros(m.shape, dtype=bool)
    if not m.is_passable(source):
        return mask
    w = m.width
    adj = adjacency(m)
    seen = bytearray(m.height * w)
    start = source[0] * w + source[1]
    seen[start] = 1
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = 1
                queue.append(v)
    mask.flat[:] = np.frombuffer(bytes(seen), dtype=np.uint8).astype(bool)
    return mask


def downscale_map(m: GridMap, factor: int) -> GridMap:
    """Merge ``factor x factor`` blocks; a block is passable on a strict majority."""
    if factor < 1:
        raise ValueError("factor must be positive")
    if m.height % factor or m.width % factor:
        raise ValueError(f"factor {factor} does not divide map size {m.height}x{m.width}")
    if factor == 1:
        return GridMap(m.passable, name=m.name)
    h, w = m.height // factor, m.width // factor
    counts = m.passable.reshape(h, factor, w, factor).sum(axis=(1, 3))
    return GridMap(2 * counts > factor * factor, name=m.name)


@dataclass(frozen=True)
class NavProblem:
    """A goal recognition problem on a grid: start state and candidate goals."""

    map: GridMap
    start: Cell
    goals: tuple[Cell, ...]
    true_goal: int | None = None
    _checked: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "start", Cell(*self.start))
        object.__setattr__(self, "goals", tuple(Cell(*g) for g in self.goals))
        if self._checked:
            validate_problem(self)

    @property
    def num_goals(self) -> int:
        return len(self.goals)


def validate_problem(p: NavProblem) -> None:
    m = p.map
    if not m.is_passable(p.start):
        raise ProblemError(f"start {tuple(p.start)} is not passable")
    if len(p.goals) < 2:
        raise ProblemError("a recognition problem needs at least two goals")
    if len(set(p.goals)) != len(p.goals):
        raise ProblemError("goals must be pairwise distinct")
    reach = reachable_mask(m, p.start)
    for i, g in enumerate(p.goals):
        if not m.is_passable(g):
            raise ProblemError(f"goal {i} at {tuple(g)} is not passable")
        if not reach[g]:
            raise ProblemError(f"goal {i} at {tuple(g)} is unreachable from start")
    if p.true_goal is not None and not 0 <= p.true_goal < len(p.goals):
        raise ProblemError(f"true goal index {p.true_goal} out of range")


def is_valid_trajectory(m: GridMap, cells: Sequence, start=None) -> bool:
    """Check contiguity (L1 step of exactly 1) and passability of a cell sequence."""
    if len(cells) == 0:
        return False
    if start is not None and tuple(cells[0]) != tuple(start):
        return False
    prev = None
    for cell in cells:
        if not m.is_passable(cell):
            return False
        if prev is not None and abs(cell[0] - prev[0]) + abs(cell[1] - prev[1]) != 1:
            return False
        prev = cell
    return True


def as_cells(cells: Iterable) -> list[Cell]:
    return [Cell(int(r), int(c)) for r, c in cells]


def sample_problem(m: GridMap, num_goals: int, rng: np.random.Generator,
                   max_tries: int = 1000) -> NavProblem:
    """Draw a start and ``num_goals`` distinct goals uniformly from passable cells.

    Configurations with a goal unreachable from the start are rejected and
    redrawn. The true goal index is drawn uniformly.
    """
    cells = np.flatnonzero(m.passable.ravel())
    w = m.width
    need = num_goals + 1
    for _ in range(max_tries):
        if len(cells) < need:
            continue
        picks = rng.choice(cells, size=need, replace=False)
        start = Cell(int(picks[0] // w), int(picks[0] % w))
        reach = reachable_mask(m, start).ravel()
        if not reach[picks[1:]].all():
            continue
        goals = tuple(Cell(int(i // w), int(i % w)) for i in picks[1:])
        true_goal = int(rng.integers(num_goals))
        return NavProblem(m, start, goals, true_goal, _checked=False)
    raise ProblemError(
        f"no valid problem with {num_goals} goals found in {max_tries} tries on {m.name}"
    )
