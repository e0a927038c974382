import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmd_robust.kernel_core import KernelSpec, WeightedAtoms, mmd_weighted
from mmd_robust.lfd_solver import (BallGeometry, ConvergenceError, InfeasibleError,
                                   LfdSolution, SolverOptions, SupportProvenance, SupportSet,
                                   certify_dual, lfd_objective, project_ball_simplex,
                                   project_simplex, sample_support, solve_lfd, union_support)
from mmd_robust.uncertainty import build_set

from oracles import ball_quadratic, kernel, lfd_grid_oracle, simplex_grid, \
    simplex_projection_active_set

G1 = KernelSpec.gaussian(1.0)


def _tiny_instance(seed):
    """Random 1-D instance whose balls are reachable from the support."""
    rng = np.random.default_rng(seed)
    while True:
        N = int(rng.integers(2, 5))
        m0, m1 = rng.integers(1, 4, 2)
        C0 = rng.uniform(-1, 0.5, (m0, 1))
        C1 = rng.uniform(0.5, 2, (m1, 1))
        Z = rng.uniform(-1.5, 2.5, (N, 1))
        D = mmd_weighted(G1, WeightedAtoms.empirical(C0), WeightedAtoms.empirical(C1))
        theta = rng.uniform(0.5, 0.95) * D / 2
        s0, s1 = build_set(C0, theta, G1), build_set(C1, theta, G1)
        sup = SupportSet(Z)
        try:
            BallGeometry(s0, sup).feasible_point()
            BallGeometry(s1, sup).feasible_point()
        except InfeasibleError:
            continue
        if lfd_grid_oracle(Z, C0, C1, theta, theta) is None:
            continue
        return s0, s1, sup


def dual_constraint_residuals(cert, sol, set0, set1):
    """Largest violation of each dual constraint family at the support points."""
    Z = sol.support.points

    def evaluate(coeffs, center_coeffs, center):
        vals = np.zeros(len(Z))
        for i, z in enumerate(Z):
            vals[i] = sum(a * kernel("gaussian", 1.0, zj, z) for a, zj in zip(coeffs, Z))
            vals[i] += sum(a * kernel("gaussian", 1.0, c, z)
                           for a, c in zip(center_coeffs, center.points))
        return vals

    f1 = evaluate(cert.f1_coeffs, cert.f1_center_coeffs, set1.center)
    g1 = evaluate(cert.g1_coeffs, cert.g1_center_coeffs, set0.center)
    phi = cert.phi
    return (np.max(1 - phi - cert.f0 - f1), np.max(phi - cert.g0 - g1),
            max(-phi.min(), phi.max() - 1))


class TestSupports:
    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            SupportSet([[0.0]])

    def test_sample_support_deterministic(self):
        a = sample_support([0.0], [1.0], 2, 7)
        b = sample_support([0.0], [1.0], 2, 7)
        c = sample_support([0.0], [1.0], 2, 8)
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)
        assert a.provenance is SupportProvenance.RANDOMLY_SAMPLED

    def test_sample_support_in_box(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            d = int(rng.integers(1, 4))
            lo = rng.normal(size=d)
            hi = lo + rng.uniform(1e-3, 3, d)
            pts = sample_support(lo, hi, int(rng.integers(2, 20)), int(rng.integers(1e9))).points
            assert np.all(pts >= lo) and np.all(pts <= hi)

    def test_degenerate_box(self):
        with pytest.raises(ValueError):
            sample_support([0.0, 1.0], [1.0, 1.0], 5, 0)

    def test_union_support(self):
        rng = np.random.default_rng(1)
        s0 = build_set(rng.normal(size=(50, 3)), 0.1, G1)
        s1 = build_set(rng.normal(size=(50, 3)), 0.1, G1)
        sup = union_support(s0, s1)
        assert len(sup) == 100 and sup.provenance is SupportProvenance.TRAINING_UNION
        assert len(union_support(build_set([[0.0]], 0, G1), build_set([[1.0]], 0, G1))) == 2
        dup = union_support(build_set([[0.0]], 0, G1), build_set([[0.0]], 0, G1))
        assert dup.points.tolist() == [[0.0], [0.0]]


class TestProjectSimplex:
    def test_on_simplex(self):
        v = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_simplex(v), v, atol=1e-15)

    def test_corner(self):
        np.testing.assert_allclose(project_simplex([2.0, 0.0]), [1.0, 0.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            project_simplex([np.nan, 1.0])

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_active_set_enumeration(self, seed):
        v = np.random.default_rng(seed).normal(scale=2, size=6)
        np.testing.assert_allclose(project_simplex(v), simplex_projection_active_set(v), atol=1e-8)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12))
    def test_idempotent(self, v):
        w = project_simplex(v)
        assert abs(w.sum() - 1) < 1e-9 and w.min() >= 0
        np.testing.assert_allclose(project_simplex(w), w, atol=1e-9)


class TestProjectBallSimplex:
    def _setup(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.uniform(-1, 2, (3, 1))
        C = rng.uniform(-0.5, 1.5, (2, 1))
        geom = BallGeometry(build_set(C, 10.0, G1), SupportSet(Z))
        qmin = geom.q(geom.feasible_point(), exact=True)
        theta = math.sqrt(max(qmin, 0)) + rng.uniform(0.02, 0.2)
        return build_set(C, theta, G1), SupportSet(Z)

    def test_feasible_input_unchanged(self):
        s = build_set([[0.0], [1.0]], 0.3, G1)
        sup = SupportSet([[0.0], [1.0]])
        v = np.array([0.5, 0.5])
        np.testing.assert_allclose(project_ball_simplex(v, s, sup), v, atol=1e-12)

    def test_inactive_ball(self):
        s = build_set([[0.0], [1.0]], 5.0, G1)
        sup = SupportSet([[0.0], [1.0]])
        v = np.array([1.4, -0.3])
        np.testing.assert_allclose(project_ball_simplex(v, s, sup), project_simplex(v), atol=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_grid_certified(self, seed):
        s, sup = self._setup(seed)
        rng = np.random.default_rng(100 + seed)
        G = simplex_grid(3, 200)
        q = ball_quadratic(G, sup.points, s.center.points, s.center.weights, "gaussian", 1.0)
        F = G[q <= s.radius**2]
        for _ in range(5):
            v = rng.normal(scale=0.8, size=3)
            out = project_ball_simplex(v, s, sup)
            assert abs(out.sum() - 1) < 1e-7 and out.min() >= -1e-7
            assert mmd_weighted(G1, sup.atoms(out), s.center) <= s.radius + 1e-7
            best_grid = np.min(np.linalg.norm(F - v, axis=1))
            assert not best_grid < np.linalg.norm(out - v) - 1e-3

    @pytest.mark.parametrize("seed", range(5))
    def test_reprojection_is_stable(self, seed):
        s, sup = self._setup(seed)
        v = np.random.default_rng(seed).normal(size=3)
        out = project_ball_simplex(v, s, sup)
        again = project_ball_simplex(out, s, sup)
        assert np.max(np.abs(again - out)) < 1e-7


class TestSolveLfd:
    def test_overlapping_sets_give_half(self):
        s0 = build_set([[0.0], [1.0]], 0.5, G1)
        s1 = build_set([[1.0], [0.0]], 0.5, G1)
        sol = solve_lfd(s0, s1, union_support(s0, s1), require_non_overlap=False)
        assert sol.objective == pytest.approx(0.5, abs=1e-6)

    def test_overlap_rejected_by_default(self):
        s0 = build_set([[0.0], [1.0]], 0.5, G1)
        with pytest.raises(ValueError):
            solve_lfd(s0, s0, union_support(s0, s0))

    @pytest.mark.parametrize("theta", [0.0, 1e-6])
    def test_pinned_at_centres(self, theta):
        s0 = build_set([[0.0]], theta, G1)
        s1 = build_set([[3.0]], theta, G1)
        sup = SupportSet([[0.0], [3.0], [1.2]])
        sol = solve_lfd(s0, s1, sup)
        np.testing.assert_allclose(sol.p0, [1, 0, 0], atol=1e-4)
        np.testing.assert_allclose(sol.p1, [0, 1, 0], atol=1e-4)
        assert sol.objective == pytest.approx(0.0, abs=1e-4)
        cert = certify_dual(sol, s0, s1)
        assert cert.duality_gap <= 1e-3

    def test_infeasible_support(self):
        s0 = build_set([[0.0]], 0.05, G1)
        s1 = build_set([[3.0]], 0.05, G1)
        with pytest.raises(InfeasibleError):
            solve_lfd(s0, s1, SupportSet([[1.0], [2.0]]))

    def test_degenerate_support(self):
        s0 = build_set([[0.0]], 0.2, G1)
        s1 = build_set([[3.0]], 0.2, G1)
        with pytest.raises(InfeasibleError):
            solve_lfd(s0, s1, SupportSet([[1.5], [1.5]]))
        wide0 = build_set([[0.0]], 0.6, G1)
        wide1 = build_set([[0.4]], 0.6, G1)
        sol = solve_lfd(wide0, wide1, SupportSet([[0.2], [0.2]]), require_non_overlap=False)
        assert sol.objective == 0.5

    def test_convergence_error_carries_best(self):
        s0, s1, sup = _tiny_instance(3)
        opts = SolverOptions(max_iters=3, patience=10, polish=False, gap_tol=0.0)
        with pytest.raises(ConvergenceError) as info:
            solve_lfd(s0, s1, sup, opts)
        best = info.value.best
        assert isinstance(best, LfdSolution) and 0 <= best.objective <= 0.5

    def test_dimension_mismatch(self):
        s0 = build_set([[0.0]], 0.1, G1)
        s1 = build_set([[3.0]], 0.1, G1)
        with pytest.raises(ValueError):
            solve_lfd(s0, s1, SupportSet([[0.0, 1.0], [1.0, 0.0]]))

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_grid_oracle(self, seed):
        s0, s1, sup = _tiny_instance(seed)
        sol = solve_lfd(s0, s1, sup)
        grid = lfd_grid_oracle(sup.points, s0.center.points, s1.center.points,
                               s0.radius, s1.radius)
        assert abs(sol.objective - grid) <= 0.01
        # grid points are feasible, so they can never beat the solver
        assert sol.objective >= grid - 1e-6

    @pytest.mark.parametrize("seed", range(6))
    def test_solution_invariants(self, seed):
        s0, s1, sup = _tiny_instance(seed)
        sol = solve_lfd(s0, s1, sup)
        for p, s in ((sol.p0, s0), (sol.p1, s1)):
            assert abs(p.sum() - 1) <= 1e-6 and p.min() >= -1e-6
            assert mmd_weighted(G1, sup.atoms(p), s.center) <= s.radius + 1e-5
        assert 0 <= sol.objective <= 0.5
        assert sol.objective == pytest.approx(lfd_objective(sol.p0, sol.p1))

    def test_deterministic(self):
        s0, s1, sup = _tiny_instance(4)
        a = solve_lfd(s0, s1, sup)
        b = solve_lfd(s0, s1, sup)
        assert np.array_equal(a.p0, b.p0) and np.array_equal(a.p1, b.p1)
        assert a.objective_trace == b.objective_trace

    def test_json_round_trip(self):
        s0, s1, sup = _tiny_instance(5)
        sol = solve_lfd(s0, s1, sup)
        certify_dual(sol, s0, s1)
        back = LfdSolution.from_dict(json.loads(sol.to_json()))
        assert np.array_equal(back.p0, sol.p0) and back.duality_gap == sol.duality_gap
        assert {"objective_trace", "feasibility_trace", "duality_gap"} <= set(sol.to_dict())


class TestSubgradient:
    def test_indicator_of_smaller_weight(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p0, p1 = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
            i = int(rng.integers(5))
            if abs(p0[i] - p1[i]) < 1e-6:
                continue
            e = np.zeros(5)
            e[i] = 1e-7
            # moving the smaller coordinate up raises sum(min); the larger leaves it flat
            if p0[i] < p1[i]:
                assert lfd_objective(p0 + e, p1) > lfd_objective(p0, p1)
                assert lfd_objective(p0, p1 + e) == pytest.approx(lfd_objective(p0, p1), abs=1e-15)
            else:
                assert lfd_objective(p0, p1 + e) > lfd_objective(p0, p1)


class TestNestedSupports:
    def test_monotone_in_support(self):
        rng = np.random.default_rng(5)
        C0, C1 = rng.normal(0, 1, (5, 1)), rng.normal(2, 1, (5, 1))
        D = mmd_weighted(G1, WeightedAtoms.empirical(C0), WeightedAtoms.empirical(C1))
        s0, s1 = build_set(C0, 0.45 * D, G1), build_set(C1, 0.45 * D, G1)
        Z = sample_support([-2.0], [4.0], 20, 3).points
        objs = [solve_lfd(s0, s1, SupportSet(Z[:N])).objective for N in (5, 10, 20)]
        assert all(b >= a - 1e-6 for a, b in zip(objs, objs[1:]))


class TestCertifyDual:
    @pytest.mark.parametrize("seed", range(6))
    def test_constraints_and_gap(self, seed):
        s0, s1, sup = _tiny_instance(seed)
        sol = solve_lfd(s0, s1, sup)
        cert = certify_dual(sol, s0, s1)
        r1, r2, r3 = dual_constraint_residuals(cert, sol, s0, s1)
        assert max(r1, r2, r3) <= 1e-6
        assert cert.dual_value >= 2 * sol.objective - 1e-9
        assert cert.duality_gap <= 1e-3
        assert sol.duality_gap == cert.duality_gap

    @pytest.mark.parametrize("seed", range(4))
    def test_dual_value_recomputed(self, seed):
        # f0 + g0 + E_{c1} f1 + theta1 ||f1|| + E_{c0} g1 + theta0 ||g1||
        s0, s1, sup = _tiny_instance(seed)
        sol = solve_lfd(s0, s1, sup)
        cert = certify_dual(sol, s0, s1)
        Z = sup.points

        def parts(coeffs, center_coeffs, uset):
            pts = np.vstack([Z, uset.center.points])
            a = np.concatenate([coeffs, center_coeffs])
            K = np.array([[kernel("gaussian", 1.0, x, y) for y in pts] for x in pts])
            norm = math.sqrt(max(a @ K @ a, 0.0))
            Kc = np.array([[kernel("gaussian", 1.0, x, c) for c in uset.center.points]
                           for x in pts])
            mean = float(a @ Kc @ uset.center.weights)
            return mean + uset.radius * norm

        value = cert.f0 + cert.g0 + parts(cert.f1_coeffs, cert.f1_center_coeffs, s1) \
            + parts(cert.g1_coeffs, cert.g1_center_coeffs, s0)
        assert value == pytest.approx(cert.dual_value, abs=1e-8)

    def test_weak_duality_for_any_feasible_primal(self):
        s0, s1, sup = _tiny_instance(2)
        sol = solve_lfd(s0, s1, sup)
        g0, g1 = BallGeometry(s0, sup), BallGeometry(s1, sup)
        rough = LfdSolution(sup, g0.feasible_point(), g1.feasible_point(),
                            lfd_objective(g0.feasible_point(), g1.feasible_point()), 0, 0.0)
        cert = certify_dual(rough, s0, s1)
        assert cert.dual_value >= 2 * rough.objective - 1e-9
        # any dual point also bounds the optimum
        assert cert.dual_value >= 2 * sol.objective - 1e-9
