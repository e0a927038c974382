"""Neyman-Pearson error curves on the four-dimensional Gaussian setup.

Training means 0 and 0.5 e, test laws with means 0.1 e and 0.4 e, radius
0.12, false alarm level 0.1.  Use more trials for smoother curves.

Run: python gallery/04_np_experiment.py
"""

from mmd_robust.cli import format_report
from mmd_robust.sim_harness import ExperimentConfig, run_np_experiment

cfg = ExperimentConfig(mode="np", dim=4, train_m=50, mean0=0.0, mean1=0.5, eval_mean0=0.1,
                       eval_mean1=0.4, theta=0.12, alpha=0.1,
                       sample_sizes=[10, 50, 100, 400, 1000], trials=200, seed=0)
res = run_np_experiment(cfg)
print(format_report(res))
print("centre distance:", round(res.extras["center_distance"], 4))
print("thresholds:", {n: round(t, 4) for n, t in res.extras["thresholds"].items()})
