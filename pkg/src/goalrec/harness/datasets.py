"""Labelled recognition examples: generation, storage and feature streams."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import count as counter
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from ..gridworld import GridMap, NavProblem, as_cells, is_valid_trajectory, sample_problem
from ..learned import NetInputs, build_inputs
from ..planning import UNIFORM, CostModel, cost_fields, generate_suboptimal_path

DEFAULT_TEST_SIZE = 3000
DEFAULT_VALIDATION_SIZE = 160


class ConfigError(ValueError):
    pass


@dataclass
class ExampleRecord:
    map_name: str
    map_size: tuple[int, int]
    goals: list
    start: tuple
    true_goal: int
    trajectory: list
    gen_params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.map_size = tuple(int(v) for v in self.map_size)
        self.goals = as_cells(self.goals)
        self.start = tuple(int(v) for v in self.start)
        self.trajectory = as_cells(self.trajectory)
        if not 0 <= self.true_goal < len(self.goals):
            raise ValueError(f"true goal {self.true_goal} out of range for {len(self.goals)} goals")

    def problem(self, m: GridMap) -> NavProblem:
        if m.name != self.map_name or m.shape != self.map_size:
            raise ConfigError(f"record refers to map {self.map_name} {self.map_size}, got {m!r}")
        return NavProblem(m, self.start, self.goals, self.true_goal, _checked=False)

    def validate(self, m: GridMap, synthetic: bool = True) -> None:
        if not is_valid_trajectory(m, self.trajectory, self.start):
            raise ValueError("trajectory is not a contiguous passable path from the start")
        if synthetic and tuple(self.trajectory[-1]) != tuple(self.goals[self.true_goal]):
            raise ValueError("synthetic trajectory does not end at its true goal")

    def to_json(self) -> str:
        d = {
            "mapName": self.map_name,
            "mapSize": list(self.map_size),
            "goals": [list(g) for g in self.goals],
            "start": list(self.start),
            "trueGoal": self.true_goal,
            "trajectory": [list(c) for c in self.trajectory],
            "genParams": self.gen_params,
        }
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "ExampleRecord":
        d = json.loads(line)
        return cls(d["mapName"], d["mapSize"], d["goals"], d["start"], d["trueGoal"],
                   d["trajectory"], d.get("genParams", {}))


def write_records(records: Iterable[ExampleRecord], path) -> int:
    n = 0
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
            n += 1
    return n


def read_records(path) -> list[ExampleRecord]:
    lines = Path(path).read_text().splitlines()
    return [ExampleRecord.from_json(line) for line in lines if line.strip()]


@dataclass(frozen=True)
class MapSet:
    """Maps tagged for training or testing."""

    maps: Mapping[str, GridMap]
    tag: str

    def __post_init__(self):
        if self.tag not in ("train", "test"):
            raise ConfigError(f"map set tag must be 'train' or 'test', got {self.tag!r}")

    @property
    def names(self) -> list[str]:
        return sorted(self.maps)


def check_disjoint(train: MapSet, test: MapSet) -> None:
    if train.tag != "train" or test.tag != "test":
        raise ConfigError("expected one train and one test map set")
    shared = set(train.maps) & set(test.maps)
    if shared:
        raise ConfigError(f"maps used for both training and testing: {sorted(shared)}")


def generate_dataset(maps: MapSet | Mapping[str, GridMap], count: int | None, eps: float = 0.2,
                     delta_max: float = 10.0, seed: int = 0,
                     num_goals: int = 5) -> Iterator[ExampleRecord]:
    """Synthetic examples: a random problem on a random map plus the path of an
    eps-suboptimal agent to its true goal.

    Example ``i`` depends only on ``(seed, i)``; ``count=None`` streams forever.
    """
    pool = maps.maps if isinstance(maps, MapSet) else maps
    if not pool:
        raise ConfigError("map list is empty")
    names = sorted(pool)
    indices = counter() if count is None else range(count)
    for i in indices:
        rng = np.random.default_rng([seed, i])
        m = pool[names[int(rng.integers(len(names)))]]
        p = sample_problem(m, num_goals, rng)
        path_seed = int(rng.integers(2 ** 62))
        traj = generate_suboptimal_path(p, p.true_goal, eps, delta_max, path_seed)
        yield ExampleRecord(m.name, m.shape, list(p.goals), p.start, p.true_goal, traj,
                            {"eps": eps, "deltaMax": delta_max, "seed": path_seed})


def record_inputs(kind: str, rec: ExampleRecord, m: GridMap, model: CostModel = UNIFORM,
                  traj=None) -> NetInputs:
    p = rec.problem(m)
    traj = rec.trajectory if traj is None else traj
    fields = cost_fields(m, p.goals, model) if kind == "gc-net" else None
    return build_inputs(kind, p, traj, fields, model)


def example_stream(records: Iterable[ExampleRecord], maps: Mapping[str, GridMap], kind: str,
                   model: CostModel = UNIFORM) -> Iterator[tuple[NetInputs, int]]:
    """``(inputs, label)`` pairs for training on full trajectories."""
    for rec in records:
        yield record_inputs(kind, rec, maps[rec.map_name], model), rec.true_goal
