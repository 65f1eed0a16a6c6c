"""Evaluation of recognizers at several observability levels."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from ..features import truncate
from ..gridworld import GridMap
from ..learned import LoadedModel, choose_goal
from ..planning import UNIFORM, CorruptionSpec, CostModel, cost_fields
from ..symbolic import DEFAULT_BETA, ms_recognize, ratio_posterior, rg_recognize
from .datasets import ConfigError, ExampleRecord, record_inputs

SYMBOLIC_METHODS = ("ms", "rg", "ratio")
LEARNED_METHODS = ("gc-net", "sd-net", "lstm-obs", "stdnn")
METHODS = SYMBOLIC_METHODS + LEARNED_METHODS
DEFAULT_OBSERVABILITY = (25, 50, 75, 100)


@dataclass(frozen=True)
class ResultRow:
    method: str
    map_size: str
    observability: float
    eps_prime: float
    correct: int
    n: int
    seed: int

    @property
    def accuracy(self) -> Fraction:
        return Fraction(self.correct, self.n)


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...]
    observability: tuple = DEFAULT_OBSERVABILITY
    corruption: CorruptionSpec | None = None
    beta: float = DEFAULT_BETA
    seed: int = 0

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not self.observability:
            raise ConfigError("at least one observability level is required")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")

    @property
    def model(self) -> CostModel:
        return UNIFORM if self.corruption is None else CostModel(corruption=self.corruption)


def accuracy(predictions: Sequence[int], labels: Sequence[int]) -> Fraction:
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    if len(labels) == 0:
        raise ValueError("accuracy of an empty prediction set is undefined")
    return Fraction(sum(int(p == y) for p, y in zip(predictions, labels)), len(labels))


def binomial_interval(correct: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a success proportion."""
    p = correct / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _tie_rng(seed: int, index: int, method: str, obs) -> np.random.Generator:
    key = zlib.crc32(f"{method}|{obs}".encode())
    return np.random.default_rng([seed, index, key])


def _map_size(records: Sequence[ExampleRecord]) -> str:
    sizes = sorted({f"{r.map_size[0]}x{r.map_size[1]}" for r in records})
    return sizes[0] if len(sizes) == 1 else "+".join(sizes)


def check_models(models: Mapping[str, LoadedModel], records: Sequence[ExampleRecord]) -> None:
    test_maps = {r.map_name for r in records}
    for method, model in models.items():
        if model.input_kind != method:
            raise ConfigError(f"model for {method!r} was built for {model.input_kind!r} inputs")
        leaked = test_maps & set(model.train_maps)
        if leaked:
            raise ConfigError(f"{method} model was trained on test maps {sorted(leaked)}")
        seen_agents = set(model.header.get("train_agents", ()))
        if seen_agents:
            reused = {r.gen_params.get("agent") for r in records} & seen_agents
            if reused:
                raise ConfigError(f"{method} model was trained on {len(reused)} test agents")


def method_posteriors(method: str, records: Sequence[ExampleRecord], maps: Mapping[str, GridMap],
                      obs, model: CostModel, beta: float,
                      learned: LoadedModel | None = None, batch_size: int = 64) -> list[np.ndarray]:
    """Posterior over goals for every record truncated to ``obs`` percent."""
    out = []
    if method in SYMBOLIC_METHODS:
        for rec in records:
            m = maps[rec.map_name]
            p = rec.problem(m)
            traj = truncate(rec.trajectory, obs)
            if method == "ms":
                out.append(ms_recognize(p, traj, cost_fields(m, p.goals, model), beta))
            elif method == "ratio":
                out.append(ratio_posterior(p, traj, cost_fields(m, p.goals, model), model))
            else:
                out.append(rg_recognize(p, traj, model, beta))
        return out
    if learned is None:
        raise ConfigError(f"no trained model supplied for {method!r}")
    net = learned.net
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        items = [record_inputs(method, rec, maps[rec.map_name], model,
                               traj=truncate(rec.trajectory, obs)) for rec in chunk]
        out.extend(net.posterior(net.collate(items)))
    return out


def run_experiment(cfg: ExperimentConfig, models: Mapping[str, LoadedModel],
                   records: Sequence[ExampleRecord], maps: Mapping[str, GridMap]) -> list[ResultRow]:
    """Accuracy of every configured method at every observability level.

    Symbolic methods and GC features use the configuration's cost model
    (corrupted when ``cfg.corruption`` is set); SD and coordinates never do.
    """
    if not records:
        raise ConfigError("no test records")
    learned = {k: v for k, v in models.items() if k in cfg.methods}
    missing = [m for m in cfg.methods if m in LEARNED_METHODS and m not in learned]
    if missing:
        raise ConfigError(f"missing trained models for {missing}")
    check_models(learned, records)
    model = cfg.model
    eps_prime = 0.0 if cfg.corruption is None else cfg.corruption.eps_prime
    size = _map_size(records)
    rows = []
    for method in cfg.methods:
        for obs in cfg.observability:
            posts = method_posteriors(method, records, maps, obs, model, cfg.beta, learned.get(method))
            preds = [choose_goal(q, _tie_rng(cfg.seed, i, method, obs)) for i, q in enumerate(posts)]
            acc = accuracy(preds, [r.true_goal for r in records])
            rows.append(ResultRow(method, size, obs, eps_prime, int(acc * len(records)),
                                  len(records), cfg.seed))
    return rows


def robustness_experiment(cfg: ExperimentConfig, models: Mapping[str, LoadedModel],
                          records: Sequence[ExampleRecord], maps: Mapping[str, GridMap],
                          corrupted_models: Mapping[str, LoadedModel] | None = None) -> list[ResultRow]:
    """Clean and corrupted-model conditions for the same test records.

    ``corrupted_models`` optionally replaces learned models in the corrupted
    condition (for instance GC networks trained on corrupted features).
    """
    if cfg.corruption is None:
        raise ConfigError("robustness experiment needs a corruption spec")
    clean = run_experiment(replace(cfg, corruption=None), models, records, maps)
    bad_models = dict(models)
    bad_models.update(corrupted_models or {})
    corrupted = run_experiment(cfg, bad_models, records, maps)
    return clean + corrupted
