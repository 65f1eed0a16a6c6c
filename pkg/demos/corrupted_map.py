"""What a wrong cost model does to the symbolic recognizers.

The agents walk on the true map, but the recognizer plans with a model in
which a fraction eps' of the moves cost up to 10 extra. With 300 test
problems the differences between rows are mostly sampling noise.

    python3 demos/corrupted_map.py
"""

from goalrec.harness.datasets import generate_dataset
from goalrec.harness.experiments import ExperimentConfig, run_experiment
from goalrec.mapgen import bundled_split
from goalrec.planning import CorruptionSpec

_, test_maps = bundled_split(16)
records = list(generate_dataset(test_maps, 300, eps=0.2, delta_max=10.0, seed=5))

print("eps'   obs   ms     ratio")
for eps_prime in (0.0, 0.2, 1.0):
    corruption = CorruptionSpec(eps_prime, 10.0, seed=1) if eps_prime else None
    rows = run_experiment(ExperimentConfig(("ms", "ratio"), corruption=corruption, seed=0),
                          {}, records, test_maps)
    for obs in (25, 50, 75, 100):
        ms, ratio = (float(r.accuracy) for r in rows if r.observability == obs)
        print(f"{eps_prime:4.1f}  {obs:4d}  {ms:.3f}  {ratio:.3f}")
