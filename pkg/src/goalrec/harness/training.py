"""Training pipelines that tie datasets to the learned recognizers."""

from __future__ import annotations

from typing import Iterator, Mapping, Sequence

import numpy as np

from ..gridworld import GridMap
from ..learned import LoadedModel, TrainConfig, TrainResult, make_network, train
from ..planning import UNIFORM, CostModel
from .datasets import (DEFAULT_VALIDATION_SIZE, ExampleRecord, MapSet, example_stream,
                       generate_dataset)


def cycle_records(records: Sequence[ExampleRecord], seed: int) -> Iterator[ExampleRecord]:
    """Endless pass over a fixed dataset, reshuffled every pass."""
    rng = np.random.default_rng(seed)
    while True:
        for i in rng.permutation(len(records)):
            yield records[i]


def _loaded(result: TrainResult, kind: str, train_maps, use_best: bool,
            train_agents=None) -> LoadedModel:
    if use_best:
        result.net.params.load(result.best_params)
    header = {"best_epoch": result.best_epoch, "history": result.history}
    if train_agents is not None:
        header["train_agents"] = sorted(train_agents)
    return LoadedModel(result.net, kind, sorted(train_maps), header)


def train_generated(kind: str, maps: MapSet | Mapping[str, GridMap], cfg: TrainConfig,
                    eps: float = 0.2, delta_max: float = 10.0, model: CostModel = UNIFORM,
                    num_goals: int = 5, validation_size: int = DEFAULT_VALIDATION_SIZE,
                    use_best: bool = True, progress=None, **net_kwargs) -> tuple[LoadedModel, TrainResult]:
    """Train on an endless stream of fresh synthetic examples.

    The validation set is drawn from the same maps with a separate seed.
    """
    pool = maps.maps if isinstance(maps, MapSet) else maps
    data_seed, val_seed, net_seed = np.random.SeedSequence(cfg.seed).generate_state(3)
    stream = example_stream(generate_dataset(pool, None, eps, delta_max, int(data_seed), num_goals),
                            pool, kind, model)
    validation = list(example_stream(
        generate_dataset(pool, validation_size, eps, delta_max, int(val_seed), num_goals), pool, kind, model))
    shape = next(iter(pool.values())).shape
    net = make_network(kind, num_goals, grid_shape=shape, seed=int(net_seed), **net_kwargs)
    result = train(net, stream, cfg, validation, progress)
    return _loaded(result, kind, pool, use_best), result


def train_records(kind: str, records: Sequence[ExampleRecord], validation: Sequence[ExampleRecord],
                  maps: Mapping[str, GridMap], cfg: TrainConfig, model: CostModel = UNIFORM,
                  use_best: bool = True, progress=None, **net_kwargs) -> tuple[LoadedModel, TrainResult]:
    """Train on a fixed set of records (e.g. ingested trajectories).

    Ingested recordings share one map between training and testing, so for
    them the model remembers its training agents instead of its maps.
    """
    data_seed, net_seed = np.random.SeedSequence(cfg.seed).generate_state(2)
    num_goals = len(records[0].goals)
    stream = example_stream(cycle_records(records, int(data_seed)), maps, kind, model)
    val = list(example_stream(validation, maps, kind, model))
    shape = maps[records[0].map_name].shape
    net = make_network(kind, num_goals, grid_shape=shape, seed=int(net_seed), **net_kwargs)
    result = train(net, stream, cfg, val, progress)
    seen = list(records) + list(validation)
    agents = [r.gen_params["agent"] for r in seen if r.gen_params.get("source") == "ingest"]
    if agents:
        return _loaded(result, kind, (), use_best, agents), result
    return _loaded(result, kind, {r.map_name for r in seen}, use_best), result
