"""Bayes error of the smoothing and direct tests in 20 dimensions.

Training means 0 and 0.22 e, 50 samples each, radius 0.05.

Run: python gallery/05_bayes_experiment.py
"""

from mmd_robust.cli import format_report
from mmd_robust.sim_harness import ExperimentConfig, run_bayes_experiment

cfg = ExperimentConfig(mode="bayes", dim=20, train_m=50, mean0=0.0, mean1=0.22,
                       eval_mean0=0.0, eval_mean1=0.22, theta=0.05,
                       sample_sizes=[5, 10, 20, 30, 40, 50], trials=300, seed=0)
res = run_bayes_experiment(cfg)
print(format_report(res))
print(f"LFD objective {res.extras['lfd_objective']:.5f}")
