"""MMD between discrete laws, ball radii and the closest point of a ball.

Run: python gallery/01_mmd_and_balls.py
"""

import numpy as np

from mmd_robust import KernelSpec, WeightedAtoms, build_set, calibrate_radius
from mmd_robust.kernel_core import mmd_unbiased_sq, mmd_weighted
from mmd_robust.uncertainty import closest_distance, closest_witness

kern = KernelSpec.gaussian(1.0)
rng = np.random.default_rng(0)

# Two Diracs one unit apart: sqrt(2 - 2 exp(-1/2)).
print("MMD(delta_0, delta_1) =", mmd_weighted(kern, WeightedAtoms.dirac([0.0]),
                                              WeightedAtoms.dirac([1.0])))

# Empirical laws of two Gaussian samples, with the unbiased squared estimate alongside.
X = rng.standard_normal((200, 2))
Y = rng.standard_normal((200, 2)) + 0.5
print("biased MMD  :", mmd_weighted(kern, WeightedAtoms.empirical(X), WeightedAtoms.empirical(Y)))
print("unbiased MMD^2:", mmd_unbiased_sq(kern, X, Y))

# A radius that contains the true law with probability 1 - delta, for m = 50 samples.
theta = calibrate_radius(50, 0.05)
print(f"calibrated radius for m=50, delta=0.05: {theta:.4f}")

# Build a ball around 50 training samples and measure how far a shifted sample is from it.
ball = build_set(rng.standard_normal((50, 2)), 0.12, kern)
P = WeightedAtoms.empirical(rng.standard_normal((30, 2)) + 1.0)
dist = closest_distance(ball, P)
W = closest_witness(ball, P)
print(f"MMD to centre {mmd_weighted(kern, P, ball.center):.4f}, distance to ball {dist:.4f}")
print(f"witness sits on the boundary: MMD(witness, centre) = "
      f"{mmd_weighted(kern, W, ball.center):.6f} (radius {ball.radius})")
