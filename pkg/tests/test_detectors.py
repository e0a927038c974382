import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmd_robust.detectors import (SmoothedLfd, TestDecision, direct_test, np_test,
                                  np_threshold, s_form_test, smooth_eval, smooth_log_eval,
                                  smoothing_block_test, smoothing_test, valid_gamma_interval,
                                  worst_case_error_bound)
from mmd_robust.kernel_core import KernelSpec, WeightedAtoms, mmd_weighted
from mmd_robust.lfd_solver import LfdSolution, SupportSet
from mmd_robust.uncertainty import build_set, closest_distance

from oracles import kernel

G1 = KernelSpec.gaussian(1.0)
NP_50_01 = 0.503485425877029270172594478710  # sqrt(0.04) * (1 + sqrt(log 10)), mpmath


def _smoothed(points, p0, p1, spec=G1):
    sup = SupportSet(np.asarray(points, dtype=float))
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    sol = LfdSolution(sup, p0, p1, 0.5 * float(np.minimum(p0, p1).sum()), 0, 0.0)
    return SmoothedLfd(sol, spec)


def _dirac_gap(mmd):
    """Distance between two 1-D Diracs whose Gaussian MMD equals ``mmd``."""
    return math.sqrt(-2.0 * math.log(1.0 - mmd * mmd / 2.0))


class TestSmoothEval:
    def test_dirac_at_own_atom(self):
        s = _smoothed([[0.0], [3.0]], [1, 0], [0, 1])
        assert smooth_eval(s, 0, [0.0]) == 1.0

    def test_uniform_pair(self):
        s = _smoothed([[0.0], [1.0]], [0.5, 0.5], [0.5, 0.5])
        assert smooth_eval(s, 1, [0.0]) == pytest.approx(0.5 * (1 + math.exp(-0.5)), abs=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_naive_sum(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(7, 3))
        p = rng.dirichlet(np.ones(7))
        spec = KernelSpec("laplacian" if seed % 2 else "gaussian", rng.uniform(0.5, 2))
        s = _smoothed(Z, p, p[::-1], spec)
        x = rng.normal(size=3)
        ref = sum(p[i] * kernel(spec.family.value, spec.bandwidth, x, Z[i]) for i in range(7))
        assert smooth_eval(s, 0, x) == pytest.approx(ref, abs=1e-12)
        assert math.exp(smooth_log_eval(s, 0, x[None])[0]) == pytest.approx(ref, abs=1e-12)

    def test_errors(self):
        s = _smoothed([[0.0], [1.0]], [0.5, 0.5], [0.5, 0.5])
        with pytest.raises(ValueError):
            smooth_eval(s, 0, [0.0, 1.0])
        with pytest.raises(ValueError):
            smooth_eval(s, 2, [0.0])


class TestSmoothingTest:
    def test_identical_lfds(self):
        s = _smoothed([[0.0], [1.0]], [0.3, 0.7], [0.3, 0.7])
        d = smoothing_test(s, [0.4])
        assert d.statistic == 0.0 and d.accept_h1

    def test_far_diracs(self):
        s = _smoothed([[0.0], [10.0]], [1, 0], [0, 1])
        d = smoothing_test(s, [0.0])
        assert d.statistic == pytest.approx(-50.0, abs=1e-12)
        assert not d.accept_h1

    def test_midpoint(self):
        s = _smoothed([[0.0], [10.0]], [1, 0], [0, 1])
        d = smoothing_test(s, [5.0])
        assert d.statistic == 0.0 and d.accept_h1

    def test_underflow_is_exact(self):
        # both densities underflow in double precision; the log form survives
        s = _smoothed([[0.0], [10.0]], [1, 0], [0, 1])
        assert smoothing_test(s, [100.0]).statistic == pytest.approx(950.0)

    def test_block_sums_log_ratios(self):
        s = _smoothed([[0.0], [2.0]], [0.8, 0.2], [0.1, 0.9])
        X = np.array([[0.1], [1.7], [0.9]])
        single = [smoothing_test(s, x).statistic for x in X]
        block = smoothing_block_test(s, X)
        assert block.statistic == pytest.approx(sum(single), abs=1e-12)
        assert smoothing_block_test(s, X[:1]).statistic == pytest.approx(single[0], abs=1e-15)

    def test_single_point_only(self):
        s = _smoothed([[0.0], [2.0]], [0.5, 0.5], [0.5, 0.5])
        with pytest.raises(ValueError):
            smoothing_test(s, [[0.0], [1.0]])

    def test_translation_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            Z = rng.normal(size=(5, 2))
            p0, p1 = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
            shift = rng.normal(size=2) * 5
            x = rng.normal(size=2)
            a = smoothing_test(_smoothed(Z, p0, p1), x)
            b = smoothing_test(_smoothed(Z + shift, p0, p1), x + shift)
            assert a.accept_h1 == b.accept_h1

    def test_constant_shift_leaves_decision(self):
        rng = np.random.default_rng(5)
        s = _smoothed(rng.normal(size=(6, 1)), rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6)))
        X = rng.normal(size=(50, 1))
        l0, l1 = smooth_log_eval(s, 0, X), smooth_log_eval(s, 1, X)
        for c in (-30.0, 0.0, 7.5):
            assert np.array_equal((l1 + c) - (l0 + c) >= 0, l1 - l0 >= 0)

    def test_decision_serialises(self):
        d = TestDecision(True, 0.25, 0.0)
        assert d.to_dict() == {"accept_h1": True, "statistic": 0.25, "threshold": 0.0}


class TestGammaInterval:
    def test_arithmetic(self):
        gap = _dirac_gap(1.0)
        lo, hi = valid_gamma_interval(build_set([[0.0]], 0.12, G1), build_set([[gap]], 0.12, G1))
        assert (lo, hi) == (pytest.approx(-0.76), pytest.approx(0.76))

    def test_empty(self):
        gap = _dirac_gap(1.0)
        with pytest.raises(ValueError):
            valid_gamma_interval(build_set([[0.0]], 0.5, G1), build_set([[gap]], 0.5, G1))

    def test_max_radius_used(self):
        gap = _dirac_gap(1.0)
        lo, hi = valid_gamma_interval(build_set([[0.0]], 0.1, G1), build_set([[gap]], 0.3, G1))
        assert hi == pytest.approx(0.4) and lo == pytest.approx(-0.4)


def _sets(rng, d=2, sep=3.0):
    m0, m1 = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    C0 = rng.normal(size=(m0, d))
    C1 = rng.normal(size=(m1, d)) + sep
    probe0, probe1 = build_set(C0, 0.0, G1), build_set(C1, 0.0, G1)
    D = mmd_weighted(G1, probe0.center, probe1.center)
    theta = rng.uniform(0.0, 0.49) * D
    return build_set(C0, theta, G1), build_set(C1, theta, G1)


class TestDirectTest:
    def test_copy_of_null_centre(self):
        rng = np.random.default_rng(0)
        s0, s1 = _sets(rng)
        d = direct_test(s0.center.points, s0, s1, 0.0)
        assert d.statistic == pytest.approx(-mmd_weighted(G1, s0.center, s1.center), abs=1e-7)
        assert not d.accept_h1

    def test_copy_of_alt_centre(self):
        rng = np.random.default_rng(1)
        s0, s1 = _sets(rng)
        d = direct_test(s1.center.points, s0, s1, 0.0)
        assert d.statistic > 0 and d.accept_h1

    def test_empty(self):
        s0, s1 = _sets(np.random.default_rng(2))
        with pytest.raises(ValueError):
            direct_test(np.zeros((0, 2)), s0, s1)

    def test_warns_outside_interval(self):
        s0, s1 = _sets(np.random.default_rng(3))
        _, hi = valid_gamma_interval(s0, s1)
        with pytest.warns(RuntimeWarning):
            d = direct_test(s1.center.points, s0, s1, hi + 0.1)
        assert d.threshold == pytest.approx(hi + 0.1)

    def test_no_warning_at_zero(self):
        s0, s1 = _sets(np.random.default_rng(4))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            direct_test(s0.center.points, s0, s1, 0.0)


def _sample_in_regime(rng, s0, s1, regime):
    """Test samples whose empirical law sits inside ball 0, inside ball 1 or anywhere."""
    if regime == 0:
        return s0.center.points[rng.integers(len(s0.center), size=len(s0.center))]
    if regime == 1:
        return s1.center.points[rng.integers(len(s1.center), size=len(s1.center))]
    n = int(rng.integers(1, 12))
    return rng.normal(size=(n, s0.dim)) * rng.uniform(0.5, 3) + rng.uniform(-1, 4)


class TestEquivalence:
    def test_randomised_agreement(self):
        rng = np.random.default_rng(7)
        seen = {0: 0, 1: 0, 2: 0}
        for k in range(600):
            s0, s1 = _sets(rng)
            lo, hi = valid_gamma_interval(s0, s1)
            gamma = rng.uniform(lo, hi)
            X = _sample_in_regime(rng, s0, s1, k % 3)
            Pn = WeightedAtoms.empirical(X)
            inside0 = mmd_weighted(G1, Pn, s0.center) <= s0.radius
            inside1 = mmd_weighted(G1, Pn, s1.center) <= s1.radius
            seen[0 if inside0 else 1 if inside1 else 2] += 1
            a = direct_test(X, s0, s1, gamma)
            b = s_form_test(X, s0, s1, gamma)
            assert a.accept_h1 == b.accept_h1
        assert min(seen.values()) > 50

    def test_outside_both_statistics_coincide(self):
        rng = np.random.default_rng(8)
        s0, s1 = _sets(rng)
        X = np.array([[1.5, 1.5]])
        a, b = direct_test(X, s0, s1), s_form_test(X, s0, s1)
        if closest_distance(s0, WeightedAtoms.empirical(X)) > 0 and \
                closest_distance(s1, WeightedAtoms.empirical(X)) > 0:
            assert a.statistic == pytest.approx(b.statistic, abs=1e-12)


class TestNpThreshold:
    def test_exact(self):
        assert np_threshold(2, 1.0, math.exp(-1)) == pytest.approx(2.0, abs=1e-15)

    def test_arithmetic(self):
        assert np_threshold(50, 1.0, 0.1) == pytest.approx(NP_50_01, abs=1e-14)

    def test_alpha_one(self):
        assert np_threshold(8, 1.0, 1.0) == pytest.approx(0.5)

    def test_vanishes(self):
        assert np_threshold(10**6, 1.0, 0.1) < 0.01

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
    def test_bad_alpha(self, alpha):
        with pytest.raises(ValueError):
            np_threshold(10, 1.0, alpha)

    @given(st.integers(1, 10**6), st.floats(1e-6, 0.99))
    def test_monotone(self, n, alpha):
        assert np_threshold(n + 1, 1.0, alpha) < np_threshold(n, 1.0, alpha)
        assert np_threshold(n, 1.0, min(alpha * 1.01, 1.0)) < np_threshold(n, 1.0, alpha)


class TestNpTest:
    def test_copy_of_centre(self):
        s0 = build_set(np.random.default_rng(0).normal(size=(20, 2)), 0.1, G1)
        d = np_test(s0.center.points, s0, 0.1)
        assert d.statistic == 0.0 and not d.accept_h1

    def test_inside_ball(self):
        s0 = build_set([[0.0]], 0.3, G1)
        d = np_test([[0.1], [-0.1]], s0, 0.1)
        assert d.statistic == 0.0 and not d.accept_h1

    def test_strict_comparison(self):
        s0 = build_set([[0.0]], 0.0, G1)
        thr = np_threshold(1, 1.0, 1.0)  # sqrt(2), the largest possible MMD
        d = np_test([[50.0]], s0, 1.0)
        assert d.threshold == thr
        assert d.statistic == pytest.approx(thr) and not d.accept_h1

    def test_monotone_along_mixture(self):
        rng = np.random.default_rng(3)
        s0 = build_set(rng.normal(size=(5, 2)), 0.1, G1)
        P = WeightedAtoms(rng.normal(size=(4, 2)) + 3, rng.dirichlet(np.ones(4)))
        full = mmd_weighted(G1, P, s0.center)
        prev = -1.0
        for lam in np.linspace(0, 1, 41):
            pts = np.vstack([P.points, s0.center.points])
            w = np.concatenate([lam * P.weights, (1 - lam) * s0.center.weights])
            stat = closest_distance(s0, WeightedAtoms(pts, w))
            if lam * full <= s0.radius - 1e-9:
                assert stat == 0.0
            else:
                assert stat == pytest.approx(lam * full - s0.radius, abs=1e-9)
                assert stat > prev
            prev = stat

    def test_calibration_from_centre(self):
        # resampling the centre is a law inside the null ball
        rng = np.random.default_rng(9)
        s0 = build_set(rng.normal(size=(50, 2)), 0.1, G1)
        alpha, trials = 0.1, 2000
        hits = 0
        for _ in range(trials):
            X = s0.center.points[rng.integers(50, size=20)]
            hits += np_test(X, s0, alpha).accept_h1
        rate = hits / trials
        assert rate <= alpha + 3 * math.sqrt(alpha * (1 - alpha) / trials)


class TestWorstCaseBound:
    def test_exact(self):
        gap = _dirac_gap(1.0)
        b = worst_case_error_bound(build_set([[0.0]], 0.0, G1), build_set([[gap]], 0.0, G1), 8)
        assert b == pytest.approx(math.exp(-1), abs=1e-12)

    def test_boundary(self):
        gap = _dirac_gap(1.0)
        with pytest.raises(ValueError):
            worst_case_error_bound(build_set([[0.0]], 0.5, G1), build_set([[gap]], 0.5, G1), 8)

    def test_dominates_monte_carlo(self):
        # ball 0 around a Dirac at 0; the test law puts mass lam at -10 so it sits on the boundary
        s0, s1 = build_set([[0.0]], 0.1, G1), build_set([[10.0]], 0.1, G1)
        far = mmd_weighted(G1, WeightedAtoms.dirac([0.0]), WeightedAtoms.dirac([-10.0]))
        lam = s0.radius / far
        rng = np.random.default_rng(12)
        trials = 500
        for n in range(10, 101, 10):
            bound = worst_case_error_bound(s0, s1, n)
            errs = 0
            for _ in range(trials):
                X = np.where(rng.random(n) < lam, -10.0, 0.0)[:, None]
                errs += direct_test(X, s0, s1, 0.0).accept_h1
            p = errs / trials
            assert p <= bound + 2 * 1.96 * math.sqrt(p * (1 - p) / trials) + 1e-12
