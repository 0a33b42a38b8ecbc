"""
A miniature benchmark grid
==========================

Two architectures, three activations, two folds and short schedules on
the 200-trial synthetic preset.  Takes well under a minute on one core.
"""

from actfn.benchmark import run_benchmark
from actfn.data import synth_preset
from actfn.training import TrainConfig

data = synth_preset("small", seed=0, noise_sigma=0.5, class_effect=0.8)
cfg = TrainConfig(select_epochs=20, refit_epochs=10, folds=2, dtype="float32")

report = run_benchmark(["shallowconvnet", "mdnn"], ["relu", "tanh", "maf:-1"], data, cfg)
print(report.to_markdown())

# Per-fold rows, the same text `actfn run` writes to results.csv
print(report.to_csv())
