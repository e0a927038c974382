"""The three detectors on one pair of MMD balls.

Run: python gallery/03_detectors.py
"""

import numpy as np

from mmd_robust import (KernelSpec, SmoothedLfd, build_set, direct_test, np_test,
                        smoothing_block_test, solve_lfd, valid_gamma_interval,
                        worst_case_error_bound)
from mmd_robust.lfd_solver import union_support

kern = KernelSpec.gaussian(1.0)
rng = np.random.default_rng(1)
set0 = build_set(rng.standard_normal((30, 2)), 0.1, kern)
set1 = build_set(rng.standard_normal((30, 2)) + 2.0, 0.1, kern)
lo, hi = valid_gamma_interval(set0, set1)
print(f"thresholds for which the direct test is consistent: ({lo:.3f}, {hi:.3f})")

smooth = SmoothedLfd(solve_lfd(set0, set1, union_support(set0, set1)), kern)
for label, shift in (("H0 sample", 0.0), ("H1 sample", 2.0)):
    X = rng.standard_normal((10, 2)) + shift
    d = direct_test(X, set0, set1, 0.0)
    s = smoothing_block_test(smooth, X)
    n = np_test(X, set0, alpha=0.1)
    print(f"{label}: direct {d.accept_h1} ({d.statistic:+.3f}), "
          f"smoothing {s.accept_h1} ({s.statistic:+.2f}), "
          f"NP {n.accept_h1} ({n.statistic:.3f} vs {n.threshold:.3f})")

for n in (10, 50, 100):
    print(f"worst-case error bound at n={n}: {worst_case_error_bound(set0, set1, n):.3e}")
