"""Robust hypothesis testing with maximum mean discrepancy uncertainty sets."""

__version__ = "0.1.0"

from .detectors import (SmoothedLfd, TestDecision, direct_test, np_test, np_threshold,
                        s_form_test, smooth_eval, smoothing_block_test, smoothing_test,
                        valid_gamma_interval, worst_case_error_bound)
from .kernel_core import (GramCache, KernelFamily, KernelSpec, WeightedAtoms, eval_kernel,
                          gram_matrix, mmd_unbiased_sq, mmd_weighted)
from .lfd_solver import (ConvergenceError, DualCertificate, InfeasibleError, LfdError,
                         LfdSolution, SolverOptions, SupportProvenance, SupportSet, certify_dual,
                         project_ball_simplex, project_simplex, sample_support, solve_lfd,
                         union_support)
from .sim_harness import (ExperimentConfig, ExperimentMode, SimResult, fit_decay, gen_gaussian,
                          median_heuristic_bandwidth, run_bayes_experiment, run_np_experiment)
from .uncertainty import (UncertaintySet, build_set, calibrate_radius, check_non_overlap,
                          closest_distance, closest_witness)
