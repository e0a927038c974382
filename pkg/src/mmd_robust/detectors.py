"""Robust detectors built on MMD balls and their finite-sample error bounds.

Three deterministic tests are provided:

* ``smoothing_test``: likelihood ratio between kernel-smoothed LFDs.
* ``direct_test``: difference of MMDs from the test sample to the two centres.
* ``np_test``: distance from the test sample to the null ball against a
  threshold that controls the worst-case false alarm.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .kernel_core import KernelFamily, KernelSpec, WeightedAtoms, as_points, kernel_block, mmd_weighted
from .lfd_solver import LfdSolution
from .uncertainty import UncertaintySet, closest_distance

__all__ = [
    "TestDecision",
    "SmoothedLfd",
    "smooth_eval",
    "smooth_log_eval",
    "smoothing_test",
    "smoothing_block_test",
    "direct_test",
    "s_form_test",
    "valid_gamma_interval",
    "np_threshold",
    "np_test",
    "worst_case_error_bound",
]


@dataclass(frozen=True)
class TestDecision:
    """Outcome of a deterministic test; ``accept_h1`` is the decision."""

    __test__ = False  # keep pytest from collecting this class

    accept_h1: bool
    statistic: float
    threshold: float

    def to_dict(self) -> dict:
        return {"accept_h1": bool(self.accept_h1), "statistic": float(self.statistic),
                "threshold": float(self.threshold)}


@dataclass(frozen=True, eq=False)
class SmoothedLfd:
    """LFD weights extended to the whole space by ``x -> sum_i p_i k(x, z_i)``."""

    lfd: LfdSolution
    kernel: KernelSpec

    @property
    def support(self) -> np.ndarray:
        return self.lfd.support.points

    def weights(self, which: int) -> np.ndarray:
        if which not in (0, 1):
            raise ValueError(f"hypothesis index must be 0 or 1, got {which}")
        return self.lfd.p0 if which == 0 else self.lfd.p1


def _log_kernel(spec: KernelSpec, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Elementwise ``log k(x, z)``, exact even where the kernel underflows."""
    from scipy.spatial.distance import cdist

    if spec.family is KernelFamily.GAUSSIAN:
        return -cdist(X, Z, "sqeuclidean") / (2.0 * spec.bandwidth**2)
    return -cdist(X, Z, "cityblock") / spec.bandwidth


def _query(s: SmoothedLfd, x) -> np.ndarray:
    X = as_points(x, "x")
    if X.shape[1] != s.support.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {s.support.shape[1]}")
    return X


def smooth_eval(s: SmoothedLfd, which: int, x) -> float:
    """Smoothed density surrogate ``sum_i p_i k(x, z_i)`` at a single point."""
    p = s.weights(which)
    X = _query(s, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(kernel_block(s.kernel, X, s.support)[0] @ p)


def smooth_log_eval(s: SmoothedLfd, which: int, X) -> np.ndarray:
    """``log sum_i p_i k(x, z_i)`` for each row of ``X``; ``-inf`` where it vanishes."""
    p = s.weights(which)
    X = _query(s, X)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    return logsumexp(_log_kernel(s.kernel, X, s.support) + logp, axis=1)


def _log_ratio(l1: np.ndarray, l0: np.ndarray) -> np.ndarray:
    both = np.isneginf(l1) & np.isneginf(l0)
    if np.any(both):
        raise ValueError("both smoothed densities vanish at a query point")
    with np.errstate(invalid="ignore"):
        return l1 - l0


def smoothing_test(s: SmoothedLfd, x) -> TestDecision:
    """Accept H1 iff ``log(P1~(x) / P0~(x)) >= 0``.

    A zero null density with positive alternative density yields ``+inf``.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if X.shape[0] != 1:
        raise ValueError("smoothing_test takes a single point; use smoothing_block_test")
    stat = float(_log_ratio(smooth_log_eval(s, 1, X), smooth_log_eval(s, 0, X))[0])
    return TestDecision(stat >= 0.0, stat, 0.0)


def smoothing_block_test(s: SmoothedLfd, samples) -> TestDecision:
    """i.i.d. block version: the per-sample log-ratios are summed, then compared with 0.

    For a single sample this is ``smoothing_test``.
    """
    X = as_points(samples, "samples")
    lr = _log_ratio(smooth_log_eval(s, 1, X), smooth_log_eval(s, 0, X))
    if np.any(np.isposinf(lr)) and np.any(np.isneginf(lr)):
        raise ValueError("block contains points of zero density under each hypothesis")
    stat = float(np.sum(lr))
    return TestDecision(stat >= 0.0, stat, 0.0)


def _check_sets(set0: UncertaintySet, set1: UncertaintySet) -> None:
    if set0.kernel != set1.kernel:
        raise ValueError("uncertainty sets use different kernels")


def valid_gamma_interval(set0: UncertaintySet, set1: UncertaintySet) -> tuple[float, float]:
    """Thresholds ``(-D + 2 theta, D - 2 theta)`` for which the direct test is consistent.

    ``D`` is the distance between centres and ``theta`` the larger radius.
    """
    _check_sets(set0, set1)
    D = mmd_weighted(set0.kernel, set0.center, set1.center)
    theta = max(set0.radius, set1.radius)
    hi = D - 2.0 * theta
    if not hi > 0:
        raise ValueError(f"empty threshold interval: D={D:.6g}, theta={theta:.6g}")
    return -hi, hi


def _empirical(samples) -> WeightedAtoms:
    X = np.asarray(samples, dtype=float)
    if X.size == 0:
        raise ValueError("empty sample list")
    return WeightedAtoms.empirical(X)


def direct_test(samples, set0: UncertaintySet, set1: UncertaintySet,
                gamma: float = 0.0) -> TestDecision:
    """Accept H1 iff ``MMD(Pn, c0) - MMD(Pn, c1) >= gamma``.

    Costs O(m^2 + n^2) kernel evaluations.  A ``gamma`` outside
    ``valid_gamma_interval`` triggers a warning but is still applied.
    """
    _check_sets(set0, set1)
    Pn = _empirical(samples)
    try:
        lo, hi = valid_gamma_interval(set0, set1)
        inside = lo < gamma < hi
    except ValueError:
        inside = False
    if not inside:
        warnings.warn(f"gamma={gamma} lies outside the valid threshold interval",
                      RuntimeWarning, stacklevel=2)
    stat = mmd_weighted(set0.kernel, Pn, set0.center) - mmd_weighted(set1.kernel, Pn, set1.center)
    return TestDecision(stat >= gamma, stat, float(gamma))


def s_form_test(samples, set0: UncertaintySet, set1: UncertaintySet,
                gamma: float = 0.0) -> TestDecision:
    """The direct test written through distances to the balls.

    ``S = inf_{P0} MMD(Pn, P0) - inf_{P1} MMD(Pn, P1)`` is compared with
    ``gamma``, each infimum taken in closed form.  For ``gamma`` in the valid
    interval the decision agrees with ``direct_test``.
    """
    _check_sets(set0, set1)
    Pn = _empirical(samples)
    d0 = closest_distance(set0, Pn)
    d1 = closest_distance(set1, Pn)
    stat = d0 - d1
    return TestDecision(stat >= gamma, stat, float(gamma))


def np_threshold(n: int, K: float, alpha: float) -> float:
    """``gamma_n = sqrt(2K/n) * (1 + sqrt(-log alpha))``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not K > 0:
        raise ValueError(f"K must be positive, got {K}")
    return math.sqrt(2.0 * K / n) * (1.0 + math.sqrt(-math.log(alpha)))


def np_test(samples, set0: UncertaintySet, alpha: float) -> TestDecision:
    """Accept H1 iff the sample is farther than ``gamma_n`` from the null ball.

    The statistic involves the null set only.
    """
    Pn = _empirical(samples)
    stat = closest_distance(set0, Pn)
    thr = np_threshold(len(Pn), set0.kernel.bound, alpha)
    return TestDecision(stat > thr, stat, thr)


def worst_case_error_bound(set0: UncertaintySet, set1: UncertaintySet, n: int) -> float:
    """``exp(-n (D^2 - 2 theta D)^2 / (8 K^2))``, bounding both worst-case errors at gamma = 0."""
    _check_sets(set0, set1)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    D = mmd_weighted(set0.kernel, set0.center, set1.center)
    theta = max(set0.radius, set1.radius)
    if not D > 2.0 * theta:
        raise ValueError(f"bound is vacuous: D={D:.6g} <= 2 theta={2 * theta:.6g}")
    K = set0.kernel.bound
    return math.exp(-n * (D * D - 2.0 * theta * D) ** 2 / (8.0 * K * K))
