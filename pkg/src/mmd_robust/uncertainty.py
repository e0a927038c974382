"""MMD-ball uncertainty sets centred at training empirical distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel_core import KernelSpec, WeightedAtoms, as_points, mmd_weighted

__all__ = [
    "MEMBERSHIP_TOL",
    "UncertaintySet",
    "build_set",
    "calibrate_radius",
    "closest_distance",
    "closest_witness",
    "check_non_overlap",
]

MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    """All distributions within MMD ``radius`` of ``center``."""

    center: WeightedAtoms
    radius: float
    kernel: KernelSpec

    def __post_init__(self):
        if not (self.radius >= 0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be finite and >= 0, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.dim

    def distance_to_center(self, P: WeightedAtoms) -> float:
        return mmd_weighted(self.kernel, P, self.center)

    def contains(self, P: WeightedAtoms) -> bool:
        return self.distance_to_center(P) <= self.radius + MEMBERSHIP_TOL


def build_set(training, theta: float, kernel: KernelSpec) -> UncertaintySet:
    pts = as_points(training, "training")
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    return UncertaintySet(WeightedAtoms.empirical(pts), float(theta), kernel)


def calibrate_radius(m: int, delta: float, K: float = 1.0) -> float:
    """Radius ``sqrt(2K/m) * (1 + sqrt(-log delta))``.

    With ``m`` training samples and a kernel bounded by ``K``, the population
    embedding lies within this distance of the empirical one with probability
    at least ``1 - delta``.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not K > 0:
        raise ValueError(f"K must be positive, got {K}")
    return math.sqrt(2.0 * K / m) * (1.0 + math.sqrt(-math.log(delta)))


def closest_distance(uset: UncertaintySet, P: WeightedAtoms) -> float:
    """``inf_{Q in uset} MMD(P, Q)``, which is ``max(MMD(P, center) - radius, 0)``."""
    if P.dim != uset.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {uset.dim}")
    return max(uset.distance_to_center(P) - uset.radius, 0.0)


def closest_witness(uset: UncertaintySet, P: WeightedAtoms) -> WeightedAtoms:
    """A member of ``uset`` attaining the closest distance to ``P``.

    Outside the ball this is the mixture ``lam * P + (1 - lam) * center`` with
    ``lam = radius / MMD(P, center)``; inside it is ``P`` itself.
    """
    dist = uset.distance_to_center(P)
    if dist <= uset.radius:
        return P
    lam = uset.radius / dist
    pts = np.vstack([P.points, uset.center.points])
    w = np.concatenate([lam * P.weights, (1.0 - lam) * uset.center.weights])
    return WeightedAtoms(pts, w / w.sum())


def check_non_overlap(set0: UncertaintySet, set1: UncertaintySet) -> bool:
    """True iff the larger radius is strictly below half the centre distance."""
    if set0.kernel != set1.kernel:
        raise ValueError("uncertainty sets use different kernels")
    D = mmd_weighted(set0.kernel, set0.center, set1.center)
    return max(set0.radius, set1.radius) < D / 2.0
