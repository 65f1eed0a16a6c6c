"""Command-line entry point: ``goalrec <subcommand> ...``.

Every subcommand that draws random numbers requires ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import gridworld as gw
from .learned import TrainConfig, build_inputs, load_model, save_model
from .mapgen import bundled_split
from .planning import UNIFORM, CorruptionSpec, CostModel, cost_fields
from .symbolic import DEFAULT_BETA, ms_recognize, ratio_posterior, rg_recognize
from .harness.datasets import (DEFAULT_TEST_SIZE, ConfigError, MapSet, check_disjoint,
                               generate_dataset, read_records, write_records)
from .harness.experiments import (DEFAULT_OBSERVABILITY, LEARNED_METHODS, METHODS, ExperimentConfig,
                                  robustness_experiment, run_experiment)
from .harness.gradients import gradient_suite
from .harness.ingest import ingest_trajectories, load_goal_regions, save_goal_regions
from .harness.results import emit_results, read_results, results_csv, results_svg
from .harness.street import crowded_street_scene
from .harness.training import train_generated, train_records


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}")
    return float(parts[0]), float(parts[1])


def _cell(text: str) -> gw.Cell:
    r, c = _int_list(text)
    return gw.Cell(r, c)


def _cells(text: str) -> list[gw.Cell]:
    return [_cell(part) for part in text.split(";") if part.strip()]


def _model_arg(text: str) -> tuple[str, str]:
    kind, sep, path = text.partition("=")
    if not sep or kind not in LEARNED_METHODS:
        raise argparse.ArgumentTypeError(f"expected KIND=PATH with KIND in {LEARNED_METHODS}")
    return kind, path


def _cost_model(args) -> CostModel:
    if args.eps_prime is None or args.eps_prime == 0:
        return UNIFORM
    return CostModel(corruption=CorruptionSpec(args.eps_prime, args.delta_prime_max, args.seed))


def _load_maps(paths) -> dict[str, gw.GridMap]:
    maps = {}
    for path in paths:
        m = gw.load_map(path)
        maps[m.name] = m
    return maps


def _split_maps(args, split: str) -> dict[str, gw.GridMap]:
    if getattr(args, "map", None):
        return _load_maps(args.map)
    train, test = bundled_split(args.size)
    check_disjoint(MapSet(train, "train"), MapSet(test, "test"))
    return train if split == "train" else test


# -- subcommands -------------------------------------------------------------

def cmd_parse_map(args) -> int:
    m = gw.load_map(args.path)
    if args.downscale > 1:
        m = gw.downscale_map(m, args.downscale)
    print(json.dumps({"name": m.name, "height": m.height, "width": m.width,
                      "passable": m.num_passable}))
    if args.out:
        gw.save_map(m, args.out)
    return 0


def cmd_gen(args) -> int:
    if args.street:
        scene = crowded_street_scene(args.street, seed=args.seed)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        gw.save_map(scene.map, out / "street.map")
        save_goal_regions(scene.regions, out / "goals.json")
        (out / "street.csv").write_text(scene.csv_text)
        print(f"wrote street scene with {args.street} agents to {out} (scale {scene.scale} cells/m)")
        return 0
    if not args.out:
        raise ConfigError("gen needs --out (or --street with --out-dir)")
    maps = _split_maps(args, args.split)
    n = write_records(generate_dataset(maps, args.count, args.eps, args.delta_max, args.seed,
                                       args.goals), args.out)
    print(f"wrote {n} records to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    net_kwargs = {}
    if args.hidden:
        net_kwargs["hidden"] = args.hidden
    if args.no_obs_encoder:
        if args.method not in ("gc-net", "sd-net"):
            raise ConfigError("--no-obs-encoder applies to gc-net and sd-net only")
        net_kwargs["use_obs_encoder"] = False
    model = _cost_model(args)

    def progress(h):
        if args.verbose:
            print(json.dumps(h), file=sys.stderr)

    if args.records:
        if not args.map:
            raise ConfigError("training from records needs --map")
        records = read_records(args.records)
        if not args.val_records:
            raise ConfigError("training from records needs --val-records")
        validation = read_records(args.val_records)
        loaded, result = train_records(args.method, records, validation, _load_maps(args.map), cfg,
                                       model, progress=progress, **net_kwargs)
    else:
        maps = _split_maps(args, "train")
        loaded, result = train_generated(args.method, maps, cfg, args.eps, args.delta_max, model,
                                         args.goals, progress=progress, **net_kwargs)
    hyper = {**cfg.to_dict(), "eps": args.eps, "delta_max": args.delta_max,
             "eps_prime": args.eps_prime or 0.0}
    save_model(args.out, loaded.net, loaded.input_kind, loaded.train_maps, hyper, extra=loaded.header)
    best = result.history[result.best_epoch - 1] if result.best_epoch else result.history[-1]
    print(f"saved {args.method} model to {args.out}; best epoch {result.best_epoch} "
          f"val_accuracy {best['val_accuracy']:.4f}")
    return 0


def _experiment_inputs(args):
    models = dict(args.model or [])
    loaded = {kind: load_model(path) for kind, path in models.items()}
    if args.records:
        records = read_records(args.records)
        maps = _load_maps(args.map) if args.map else bundled_split(args.size)[1]
    else:
        maps = _split_maps(args, "test")
        records = list(generate_dataset(maps, args.count, args.eps, args.delta_max, args.seed, args.goals))
    return loaded, records, maps


def _write_rows(rows, args) -> None:
    if args.csv:
        emit_results(rows, args.csv, args.svg)
    else:
        sys.stdout.write(results_csv(rows))
        if args.svg:
            Path(args.svg).write_text(results_svg(rows))


def cmd_eval(args) -> int:
    loaded, records, maps = _experiment_inputs(args)
    corruption = None
    if args.eps_prime:
        corruption = CorruptionSpec(args.eps_prime, args.delta_prime_max, args.seed)
    cfg = ExperimentConfig(tuple(args.methods), args.obs, corruption, args.beta, args.seed)
    _write_rows(run_experiment(cfg, loaded, records, maps), args)
    return 0


def cmd_robustness(args) -> int:
    loaded, records, maps = _experiment_inputs(args)
    corrupted = {kind: load_model(path) for kind, path in (args.corrupted_model or [])}
    corruption = CorruptionSpec(args.eps_prime, args.delta_prime_max, args.seed)
    cfg = ExperimentConfig(tuple(args.methods), args.obs, corruption, args.beta, args.seed)
    _write_rows(robustness_experiment(cfg, loaded, records, maps, corrupted), args)
    return 0


def cmd_ingest(args) -> int:
    m = gw.load_map(args.map)
    regions = load_goal_regions(args.goals)
    result = ingest_trajectories(Path(args.csv).read_text(), m, regions, args.scale, args.origin,
                                 args.test_fraction)
    write_records(result.train, args.train_out)
    write_records(result.test, args.test_out)
    print(f"train {len(result.train)}  test {len(result.test)}  dropped {result.dropped}")
    return 0


def cmd_recognize(args) -> int:
    m = gw.load_map(args.map)
    problem = gw.NavProblem(m, args.start, tuple(args.goals))
    traj = args.traj if args.traj else [args.start]
    if not gw.is_valid_trajectory(m, traj, args.start):
        raise ConfigError("trajectory must be a contiguous passable path from --start")
    model = _cost_model(args)
    if args.method == "ms":
        post = ms_recognize(problem, traj, cost_fields(m, problem.goals, model), args.beta)
    elif args.method == "rg":
        post = rg_recognize(problem, traj, model, args.beta)
    elif args.method == "ratio":
        post = ratio_posterior(problem, traj, cost_fields(m, problem.goals, model), model)
    else:
        if not args.model:
            raise ConfigError(f"{args.method} needs --model")
        loaded = load_model(args.model)
        if loaded.input_kind != args.method:
            raise ConfigError(f"model was trained for {loaded.input_kind}, not {args.method}")
        fields = cost_fields(m, problem.goals, model) if args.method == "gc-net" else None
        inputs = build_inputs(args.method, problem, traj, fields, model)
        post = loaded.net.posterior(loaded.net.collate([inputs]))[0]
    print(json.dumps({"method": args.method, "posterior": [float(v) for v in post],
                      "best": int(np.argmax(post))}))
    return 0


def cmd_gradcheck(args) -> int:
    reports = gradient_suite(args.seed, args.hidden)
    ok = True
    for name, rep in reports.items():
        status = "ok" if rep.passed else "FAIL"
        ok &= rep.passed
        print(f"{name:14s} max relative error {rep.max_error:.3e} (tolerance {rep.tolerance:.0e}) {status}")
    return 0 if ok else 1


def cmd_plot(args) -> int:
    Path(args.svg).write_text(results_svg(read_results(args.csv)))
    return 0


# -- parser ------------------------------------------------------------------

def _add_generation(p, count_default: int) -> None:
    p.add_argument("--size", type=int, default=16, help="bundled map size (default 16)")
    p.add_argument("--map", action="append", help="map file; repeat for several (overrides bundled)")
    p.add_argument("--count", type=int, default=count_default)
    p.add_argument("--eps", type=float, default=0.2, help="suboptimality probability")
    p.add_argument("--delta-max", type=float, default=10.0)
    p.add_argument("--goals", type=int, default=5, help="candidate goals per problem")


def _add_corruption(p, default=None) -> None:
    p.add_argument("--eps-prime", type=float, default=default,
                   help="probability that a transition cost is corrupted")
    p.add_argument("--delta-prime-max", type=float, default=10.0)


def _add_experiment(p) -> None:
    _add_generation(p, DEFAULT_TEST_SIZE)
    p.add_argument("--records", help="test records (JSONL); generated from test maps if omitted")
    p.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m], default=["ms"],
                   help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--model", type=_model_arg, action="append", help="KIND=PATH trained model")
    p.add_argument("--obs", type=_int_list, default=DEFAULT_OBSERVABILITY)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--csv", help="results CSV path (stdout if omitted)")
    p.add_argument("--svg", help="optional chart path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="goalrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse-map", help="validate a MovingAI map and print its summary")
    p.add_argument("path")
    p.add_argument("--downscale", type=int, default=1)
    p.add_argument("--out", help="write the (possibly downscaled) map here")
    p.set_defaults(func=cmd_parse_map)

    p = sub.add_parser("gen", help="generate example records or a street scene")
    _add_generation(p, DEFAULT_TEST_SIZE)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="output JSONL")
    p.add_argument("--street", type=int, default=0, metavar="AGENTS",
                   help="simulate a crowded street with this many walkers instead")
    p.add_argument("--out-dir", default=".", help="directory for the street scene files")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a learned recognizer")
    _add_generation(p, 0)
    _add_corruption(p)
    p.add_argument("--method", choices=LEARNED_METHODS, required=True)
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--no-obs-encoder", action="store_true", help="features only (gc-net, sd-net)")
    p.add_argument("--records", help="train on these records instead of generated ones")
    p.add_argument("--val-records")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy per method and observability level")
    _add_experiment(p)
    _add_corruption(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("robustness", help="clean versus corrupted-model accuracy")
    _add_experiment(p)
    _add_corruption(p, default=1.0)
    p.add_argument("--corrupted-model", type=_model_arg, action="append",
                   help="KIND=PATH model used only in the corrupted condition")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("ingest", help="convert recorded trajectories into records")
    p.add_argument("--csv", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--goals", required=True, help="goal-region JSON")
    p.add_argument("--scale", type=float, required=True, help="cells per world unit")
    p.add_argument("--origin", type=_float_pair, default=(0.0, 0.0))
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("recognize", help="posterior over goals for one observed prefix")
    p.add_argument("--map", required=True)
    p.add_argument("--start", type=_cell, required=True, help="row,col")
    p.add_argument("--goals", type=_cells, required=True, help="'r,c;r,c;...'")
    p.add_argument("--traj", type=_cells, default=None, help="'r,c;r,c;...' starting at --start")
    p.add_argument("--method", choices=METHODS, default="ms")
    p.add_argument("--model", help="trained model for learned methods")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--seed", type=int, default=0, help="corruption seed (with --eps-prime)")
    _add_corruption(p)
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("gradcheck", help="finite-difference check of all layers and networks")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--hidden", type=int, default=4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot", help="draw an accuracy chart from a results CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--svg", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, gw.MapFormatError, gw.ProblemError, ValueError, OSError) as err:
        print(f"goalrec {args.command}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
