"""From recorded pedestrian tracks to goal predictions.

Simulates a crowded street, ingests the tracks as if they were a real
recording, trains the coordinate-only baseline and the gradient network,
and compares them with the endpoint-cost recognizer. Small sizes keep
the run to a few minutes; raise AGENTS and EPOCHS for steadier numbers.

    python3 demos/street_pipeline.py
"""

from goalrec.harness.experiments import ExperimentConfig, run_experiment
from goalrec.harness.ingest import ingest_trajectories
from goalrec.harness.results import results_csv
from goalrec.harness.street import crowded_street_scene
from goalrec.harness.training import train_records
from goalrec.learned import TrainConfig

AGENTS = 1500
EPOCHS = 8

scene = crowded_street_scene(AGENTS, seed=3)
res = ingest_trajectories(scene.csv_text, scene.map, scene.regions, scene.scale)
print(f"{len(res.train)} training and {len(res.test)} test agents, {res.dropped} dropped "
      "(they stopped outside every goal region)")

train, val = res.train[:-160], res.train[-160:]
maps = {scene.map.name: scene.map}
models = {}
for kind in ("lstm-obs", "gc-net"):
    models[kind], result = train_records(kind, train, val, maps, TrainConfig(epochs=EPOCHS, seed=1))
    print(f"{kind}: best validation accuracy {max(h['val_accuracy'] for h in result.history):.3f}")

rows = run_experiment(ExperimentConfig(("ms", "lstm-obs", "gc-net"), seed=0), models, res.test, maps)
print()
print(results_csv(rows), end="")
