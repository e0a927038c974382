"""Least favourable distributions on a finite support.

The worst-case Bayes error over two MMD balls, restricted to distributions
supported on points ``z_1..z_N``, is

    1/2 * max  sum_i min(p0_i, p1_i)
          s.t. p_l in simplex,  MMD(sum_i p_l_i delta_{z_i}, center_l) <= theta_l.

It is a concave maximisation over two convex sets (simplex intersected with an
ellipsoid).  ``solve_lfd`` runs projected subgradient ascent, projecting each
block with Dykstra's alternating projections; the best iterate is then polished
by SLSQP on the smooth epigraph form (``max sum t`` with ``t <= p0, t <= p1``)
and snapped back into the feasible set.  ``certify_dual`` builds an
explicit feasible point of the kernel-basis dual (an upper bound on twice the
objective) and reports the duality gap.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from . import _projections as _proj
from .kernel_core import PSD_JITTER, WeightedAtoms, as_points, kernel_block
from .uncertainty import UncertaintySet, check_non_overlap

__all__ = [
    "LfdError",
    "InfeasibleError",
    "ConvergenceError",
    "SupportProvenance",
    "SupportSet",
    "SolverOptions",
    "LfdSolution",
    "DualCertificate",
    "BallGeometry",
    "sample_support",
    "union_support",
    "project_simplex",
    "project_ball_simplex",
    "solve_lfd",
    "certify_dual",
    "lfd_objective",
]

INFEASIBILITY_THRESHOLD = 1e-4


class LfdError(RuntimeError):
    """Base class for solver failures."""


class InfeasibleError(LfdError):
    """No distribution on the support lies inside the ball."""


class ConvergenceError(LfdError):
    """Iteration budget exhausted; ``best`` carries the best iterate found."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class SupportProvenance(str, enum.Enum):
    TRAINING_UNION = "training_union"
    RANDOMLY_SAMPLED = "randomly_sampled"
    USER = "user"


@dataclass(frozen=True, eq=False)
class SupportSet:
    points: np.ndarray
    provenance: SupportProvenance = SupportProvenance.USER

    def __post_init__(self):
        pts = as_points(self.points, "support")
        if pts.shape[0] < 2:
            raise ValueError("a support set needs at least 2 points")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "provenance", SupportProvenance(self.provenance))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def atoms(self, weights) -> WeightedAtoms:
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        return WeightedAtoms(self.points, w / w.sum())


@dataclass
class SolverOptions:
    tol: float = 1e-6
    max_iters: int = 20_000
    step_c: float = 0.5
    dykstra_iters: int = 500
    # stop once the best objective gains less than ``tol`` over this many iterations
    patience: int = 2_000
    trace_every: int = 50
    # SLSQP refinement of the subgradient iterate
    polish: bool = True
    polish_iters: int = 500
    # a run that exhausts max_iters still counts as converged when the dual
    # certificate closes to within this (un-halved) gap
    gap_tol: float = 1e-6


def lfd_objective(p0: np.ndarray, p1: np.ndarray) -> float:
    """Half the overlap mass, ``1/2 * sum_i min(p0_i, p1_i)``."""
    return 0.5 * float(np.minimum(p0, p1).sum())


@dataclass
class LfdSolution:
    support: SupportSet
    p0: np.ndarray
    p1: np.ndarray
    objective: float
    iterations: int
    primal_feasibility: float
    duality_gap: float | None = None
    objective_trace: list = field(default_factory=list)
    feasibility_trace: list = field(default_factory=list)
    converged: bool = True

    def atoms(self, which: int) -> WeightedAtoms:
        return self.support.atoms(self.p0 if which == 0 else self.p1)

    def to_dict(self) -> dict:
        return {
            "support": self.support.points.tolist(),
            "provenance": self.support.provenance.value,
            "p0": self.p0.tolist(),
            "p1": self.p1.tolist(),
            "objective": self.objective,
            "iterations": self.iterations,
            "primal_feasibility": self.primal_feasibility,
            "duality_gap": self.duality_gap,
            "converged": self.converged,
            "objective_trace": self.objective_trace,
            "feasibility_trace": self.feasibility_trace,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LfdSolution":
        return cls(
            support=SupportSet(np.asarray(d["support"], float), d.get("provenance", "user")),
            p0=np.asarray(d["p0"], float),
            p1=np.asarray(d["p1"], float),
            objective=float(d["objective"]),
            iterations=int(d["iterations"]),
            primal_feasibility=float(d["primal_feasibility"]),
            duality_gap=d.get("duality_gap"),
            objective_trace=list(d.get("objective_trace", [])),
            feasibility_trace=list(d.get("feasibility_trace", [])),
            converged=bool(d.get("converged", True)),
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass
class DualCertificate:
    """Feasible point of the dual, stated for the un-halved objective.

    ``f1`` is the RKHS function ``sum_i f1_coeffs[i] k(z_i, .) +
    sum_j f1_center_coeffs[j] k(c1_j, .)`` where ``c1`` are the atoms of the
    alternative-hypothesis centre (``g1`` likewise with the null centre).  The
    centre terms vanish when the centre atoms are themselves support points
    and are folded into ``f1_coeffs``.
    """

    f0: float
    g0: float
    f1_coeffs: np.ndarray
    g1_coeffs: np.ndarray
    f1_center_coeffs: np.ndarray
    g1_center_coeffs: np.ndarray
    phi: np.ndarray
    dual_value: float
    duality_gap: float

    def to_dict(self) -> dict:
        return {
            "f0": self.f0,
            "g0": self.g0,
            "f1_coeffs": self.f1_coeffs.tolist(),
            "g1_coeffs": self.g1_coeffs.tolist(),
            "f1_center_coeffs": self.f1_center_coeffs.tolist(),
            "g1_center_coeffs": self.g1_center_coeffs.tolist(),
            "phi": self.phi.tolist(),
            "dual_value": self.dual_value,
            "duality_gap": self.duality_gap,
        }


# ---------------------------------------------------------------------------
# supports


def sample_support(box_lo, box_hi, N: int, seed: int) -> SupportSet:
    """``N`` points i.i.d. uniform on the box ``[box_lo, box_hi]``."""
    lo = np.atleast_1d(np.asarray(box_lo, dtype=float))
    hi = np.atleast_1d(np.asarray(box_hi, dtype=float))
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ValueError("box corners must be vectors of equal length")
    if not np.all(lo < hi):
        raise ValueError("degenerate box: need box_lo < box_hi componentwise")
    if N < 2:
        raise ValueError("N must be >= 2")
    rng = np.random.default_rng(seed)
    pts = lo + (hi - lo) * rng.random((N, lo.size))
    return SupportSet(pts, SupportProvenance.RANDOMLY_SAMPLED)


def union_support(set0: UncertaintySet, set1: UncertaintySet) -> SupportSet:
    """Both centres' atoms stacked (null first), duplicates kept."""
    if set0.dim != set1.dim:
        raise ValueError(f"dimension mismatch: {set0.dim} vs {set1.dim}")
    pts = np.vstack([set0.center.points, set1.center.points])
    return SupportSet(pts, SupportProvenance.TRAINING_UNION)


# ---------------------------------------------------------------------------
# projections


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum(w) = 1}`` (sort-and-threshold)."""
    v = np.ascontiguousarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite entries")
    return _proj.simplex_proj(v)


class BallGeometry:
    """The ball constraint of one uncertainty set, expressed on a support.

    ``q(p) = p'Kp - 2 b'p + c`` is the squared MMD between ``sum p_i delta_{z_i}``
    and the centre, with ``K`` the (jittered) support Gram.  The self-Gram is
    eigendecomposed once so that projecting onto ``{q <= theta^2}`` reduces to
    a scalar root-find on the Lagrange multiplier.
    """

    def __init__(self, uset: UncertaintySet, support: SupportSet, dykstra_iters: int = 500):
        if support.dim != uset.dim:
            raise ValueError(f"dimension mismatch: support {support.dim} vs set {uset.dim}")
        self.uset = uset
        self.support = support
        self.theta = float(uset.radius)
        self.dykstra_iters = dykstra_iters
        Z = support.points
        C = uset.center.points
        w = uset.center.weights
        K = kernel_block(uset.kernel, Z, Z)
        self.K_exact = 0.5 * (K + K.T)
        self.K = self.K_exact + PSD_JITTER * np.eye(len(support))
        self.Kzc = kernel_block(uset.kernel, Z, C)
        self.b = self.Kzc @ w
        self.c = float(w @ kernel_block(uset.kernel, C, C) @ w)
        lam, U = np.linalg.eigh(self.K)
        self.eigvals = np.maximum(lam, PSD_JITTER)
        self.U = U
        self.b_eig = U.T @ self.b
        self.lipschitz = 2.0 * float(self.eigvals[-1])
        self._feasible_point = None
        self._q_min = None

    # squared distance to the centre; ``exact`` skips the jitter
    def q(self, p, exact: bool = False) -> float:
        K = self.K_exact if exact else self.K
        return float(p @ K @ p - 2.0 * self.b @ p + self.c)

    def mmd(self, p) -> float:
        return math.sqrt(max(self.q(p, exact=True), 0.0))

    def violation(self, p) -> float:
        return max(self.mmd(p) - self.theta, 0.0)

    # -- ellipsoid ---------------------------------------------------------

    def project_ellipsoid(self, v) -> np.ndarray:
        """Projection onto ``{q <= theta^2}`` (no simplex constraint)."""
        v = np.ascontiguousarray(v, dtype=float)
        return _proj.ellipsoid_proj(v, self.K, self.U, self.eigvals, self.b_eig,
                                    self.b, self.c, self.theta**2)

    # -- feasible anchor ---------------------------------------------------

    def _mapped_center(self):
        """Centre weights moved onto identical support points, if all are present."""
        Z = self.support.points
        p = np.zeros(len(self.support))
        for atom, wj in zip(self.uset.center.points, self.uset.center.weights):
            hits = np.nonzero(np.all(Z == atom, axis=1))[0]
            if hits.size == 0:
                return None
            p[hits[0]] += wj
        return p

    def _minimise_q(self, iters: int = 20_000) -> np.ndarray:
        return _proj.minimise_quad(self.K, self.b, self.c, self.lipschitz, iters)

    def feasible_point(self) -> np.ndarray:
        """A point of the simplex with (near-)minimal ``q``; raises if infeasible."""
        if self._feasible_point is None:
            cands = []
            mapped = self._mapped_center()
            if mapped is not None:
                cands.append(mapped)
            if mapped is None or self.q(mapped) > 0.25 * self.theta**2:
                cands.append(self._minimise_q())
            best = min(cands, key=self.q)
            self._feasible_point = best
            self._q_min = self.q(best, exact=True)
        if math.sqrt(max(self._q_min, 0.0)) - self.theta > INFEASIBILITY_THRESHOLD:
            raise InfeasibleError(
                f"ball of radius {self.theta:.6g} does not reach the support simplex "
                f"(closest MMD {math.sqrt(max(self._q_min, 0.0)):.6g})"
            )
        return self._feasible_point

    def compiled_args(self) -> tuple:
        """Arguments consumed by the compiled projection kernels."""
        return (self.K, self.U, self.eigvals, self.b_eig, self.b, self.c,
                self.theta**2, self.feasible_point())

    def project(self, v, iters: int | None = None) -> np.ndarray:
        """Projection onto simplex ∩ ball by Dykstra's algorithm.

        The Dykstra limit is finally pulled along the segment towards the
        feasible anchor so the output satisfies the ball constraint exactly.
        """
        iters = self.dykstra_iters if iters is None else iters
        v = np.ascontiguousarray(v, dtype=float)
        return _proj.ball_simplex_proj(v, *self.compiled_args(), iters)


def project_ball_simplex(v, uset: UncertaintySet, support: SupportSet,
                         dykstra_iters: int = 500) -> np.ndarray:
    """Euclidean projection of ``v`` onto the support weights inside ``uset``."""
    geom = BallGeometry(uset, support, dykstra_iters)
    return geom.project(np.asarray(v, dtype=float))


# ---------------------------------------------------------------------------
# primal solve


def _degenerate_solution(set0, set1, support, geoms) -> LfdSolution:
    n = len(support)
    p = np.full(n, 1.0 / n)
    viol = max(g.violation(p) for g in geoms)
    if viol > INFEASIBILITY_THRESHOLD:
        raise InfeasibleError("all support points coincide and lie outside a ball")
    return LfdSolution(support, p, p.copy(), 0.5, 0, viol)


def solve_lfd(set0: UncertaintySet, set1: UncertaintySet, support: SupportSet,
              opts: SolverOptions | None = None, *, init=None,
              require_non_overlap: bool = True) -> LfdSolution:
    """Maximise ``1/2 sum_i min(p0_i, p1_i)`` over the two balls on ``support``.

    Projected subgradient ascent with step ``step_c / sqrt(t)``; at ties the
    unit subgradient goes to ``p0``.  The best feasible iterate is returned.
    ``init`` optionally supplies a feasible starting pair ``(p0, p1)``.
    """
    opts = opts or SolverOptions()
    if require_non_overlap and not check_non_overlap(set0, set1):
        raise ValueError("uncertainty sets overlap; the robust problem is trivial")
    if support.dim != set0.dim or support.dim != set1.dim:
        raise ValueError("support dimension does not match the uncertainty sets")
    g0 = BallGeometry(set0, support, opts.dykstra_iters)
    g1 = BallGeometry(set1, support, opts.dykstra_iters)
    if np.all(support.points == support.points[0]):
        return _degenerate_solution(set0, set1, support, (g0, g1))

    a0 = g0.feasible_point()
    a1 = g1.feasible_point()
    if init is not None:
        p0 = g0.project(np.asarray(init[0], float))
        p1 = g1.project(np.asarray(init[1], float))
    else:
        p0, p1 = a0.copy(), a1.copy()

    p0, p1, val, t, sg_converged, trace = _proj.subgradient_ascent(
        p0, p1, *g0.compiled_args(), *g1.compiled_args(),
        float(opts.step_c), int(opts.max_iters), int(opts.patience), float(opts.tol),
        int(opts.dykstra_iters), int(opts.trace_every))
    obj_trace = trace.tolist()
    feas_trace = [max(g0.violation(p0), g1.violation(p1))]
    converged = sg_converged
    if opts.polish:
        polished = _polish(g0, g1, p0, p1, opts.polish_iters)
        if polished is not None:
            q0, q1 = polished
            qval = lfd_objective(q0, q1)
            if qval >= val:
                val, p0, p1 = qval, q0, q1
                feas_trace.append(max(g0.violation(p0), g1.violation(p1)))
    feas = max(g0.violation(p0), g1.violation(p1))
    sol = LfdSolution(support, p0, p1, val, t, feas,
                      objective_trace=obj_trace, feasibility_trace=feas_trace,
                      converged=converged)
    if feas > INFEASIBILITY_THRESHOLD:
        raise InfeasibleError(f"best iterate violates a ball by {feas:.3g}")
    if not converged:
        try:
            converged = certify_dual(sol, set0, set1).duality_gap <= opts.gap_tol
        except LfdError:
            converged = False
        sol.converged = converged
    if not converged:
        raise ConvergenceError(
            f"objective still improving after {opts.max_iters} iterations", best=sol)
    return sol


def _polish(g0: BallGeometry, g1: BallGeometry, p0, p1, iters: int):
    """SLSQP on ``max sum t`` s.t. ``t <= p_l``, simplex and ball constraints.

    SLSQP often stops on a stalled line search right at the optimum, so its
    status is ignored; the caller keeps whichever pair is better.
    """
    n = p0.size
    x0 = np.concatenate([p0, p1, np.minimum(p0, p1)])
    eye = np.eye(n)
    zero = np.zeros((n, n))
    lin = np.block([[eye, zero, -eye], [zero, eye, -eye]])
    a_eq = np.zeros((2, 3 * n))
    a_eq[0, :n] = 1.0
    a_eq[1, n:2 * n] = 1.0

    def ball(g, sl):
        def fun(x):
            return g.theta**2 - g.q(x[sl])

        def jac(x):
            out = np.zeros(3 * n)
            out[sl] = -2.0 * (g.K @ x[sl] - g.b)
            return out
        return {"type": "ineq", "fun": fun, "jac": jac}

    cons = [
        {"type": "eq", "fun": lambda x: a_eq @ x - 1.0, "jac": lambda x: a_eq},
        {"type": "ineq", "fun": lambda x: lin @ x, "jac": lambda x: lin},
        ball(g0, slice(0, n)),
        ball(g1, slice(n, 2 * n)),
    ]
    grad = np.concatenate([np.zeros(2 * n), -np.ones(n)])
    res = minimize(lambda x: -x[2 * n:].sum(), x0, jac=lambda x: grad, method="SLSQP",
                   bounds=[(0.0, 1.0)] * (3 * n), constraints=cons,
                   options={"maxiter": iters, "ftol": 1e-13})
    if not np.all(np.isfinite(res.x)):
        return None
    out = []
    for g, sl in ((g0, slice(0, n)), (g1, slice(n, 2 * n))):
        p = np.clip(res.x[sl], 0.0, None)
        p /= p.sum()
        args = g.compiled_args()
        p = _proj.pull_inside(p, args[-1], g.K, g.b, g.c, g.theta**2)
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# dual certificate


def _direction(geom: BallGeometry, p: np.ndarray):
    """RKHS direction ``sum p_i k(z_i,.) - sum w_j k(c_j,.)`` evaluated as needed.

    Returns (values at support points, <dir, centre embedding>, ||dir||).
    """
    vals = geom.K_exact @ p - geom.b
    inner_center = float(geom.b @ p) - geom.c
    norm = geom.mmd(p)
    return vals, inner_center, norm


def certify_dual(solution: LfdSolution, set0: UncertaintySet, set1: UncertaintySet,
                 support: SupportSet | None = None) -> DualCertificate:
    """Feasible dual point and duality gap for a primal LFD pair.

    The dual (un-halved) reads

        min  f0 + g0 + E_{c1} f1 + theta1 ||f1|| + E_{c0} g1 + theta0 ||g1||
        s.t. 1 - phi(z_i) <= f0 + f1(z_i),  phi(z_i) <= g0 + g1(z_i),  0 <= phi <= 1.

    ``f1`` is sought as ``nu1 (mu_{p1} - mu_{c1}) + sum_i a_i k(z_i, .)``: the
    first term is the optimal direction when the ball constraint binds, the
    free coefficients cover centres that sit inside the support (e.g. radius
    0).  Bounding ``||sum a_i k(z_i, .)|| <= sqrt(K) sum |a_i|`` turns the
    search into an LP; the reported ``dual_value`` is then recomputed with
    the exact RKHS norm.  Any output is a valid upper bound on twice the
    finite-support optimum by weak duality.
    """
    support = support or solution.support
    N = len(support)
    geo0 = BallGeometry(set0, support)
    geo1 = BallGeometry(set1, support)
    r1, s1, n1 = _direction(geo1, solution.p1)
    r0, s0, n0 = _direction(geo0, solution.p0)
    th0, th1 = geo0.theta, geo1.theta
    Kz = geo0.K_exact
    kb = math.sqrt(float(set0.kernel.bound))  # ||k(z, .)||

    # variables: phi (N), f0, g0, nu1, nu0, a+ (N), a- (N), b+ (N), b- (N)
    nv = 5 * N + 4
    ia, ja, ib, jb = N + 4, 2 * N + 4, 3 * N + 4, 4 * N + 4
    cost = np.zeros(nv)
    cost[N] = 1.0
    cost[N + 1] = 1.0
    cost[N + 2] = s1 + th1 * n1
    cost[N + 3] = s0 + th0 * n0
    cost[ia:ja] = geo1.b + th1 * kb
    cost[ja:ib] = -geo1.b + th1 * kb
    cost[ib:jb] = geo0.b + th0 * kb
    cost[jb:] = -geo0.b + th0 * kb
    A = np.zeros((2 * N, nv))
    ub = np.zeros(2 * N)
    idx = np.arange(N)
    # -phi - f0 - nu1 r1 - K a <= -1
    A[idx, idx] = -1.0
    A[idx, N] = -1.0
    A[idx, N + 2] = -r1
    A[:N, ia:ja] = -Kz
    A[:N, ja:ib] = Kz
    ub[:N] = -1.0
    # phi - g0 - nu0 r0 - K b <= 0
    A[N + idx, idx] = 1.0
    A[N + idx, N + 1] = -1.0
    A[N + idx, N + 3] = -r0
    A[N:, ib:jb] = -Kz
    A[N:, jb:] = Kz
    bounds = ([(0.0, 1.0)] * N + [(None, None), (None, None)]
              + [(0.0, None)] * (2 + 4 * N))
    res = linprog(cost, A_ub=A, b_ub=ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise LfdError(f"dual LP failed: {res.message}")
    x = res.x
    phi = np.clip(x[:N], 0.0, 1.0)
    nu1, nu0 = max(x[N + 2], 0.0), max(x[N + 3], 0.0)
    a = x[ia:ja] - x[ja:ib]
    b = x[ib:jb] - x[jb:]

    f1_coeffs = nu1 * solution.p1 + a
    g1_coeffs = nu0 * solution.p0 + b
    f1_center = -nu1 * set1.center.weights
    g1_center = -nu0 * set0.center.weights
    f1_vals = Kz @ f1_coeffs + geo1.Kzc @ f1_center
    g1_vals = Kz @ g1_coeffs + geo0.Kzc @ g1_center
    f0 = float(np.max(1.0 - phi - f1_vals))
    g0 = float(np.max(phi - g1_vals))
    dual_value = (f0 + g0 + _mean_plus_norm(geo1, f1_coeffs, f1_center)
                  + _mean_plus_norm(geo0, g1_coeffs, g1_center))

    f1_coeffs, f1_center = _fold_center(support, set1, f1_coeffs, f1_center)
    g1_coeffs, g1_center = _fold_center(support, set0, g1_coeffs, g1_center)

    gap = dual_value - 2.0 * solution.objective
    solution.duality_gap = gap
    return DualCertificate(f0, g0, f1_coeffs, g1_coeffs, f1_center, g1_center,
                           phi, float(dual_value), float(gap))


def _mean_plus_norm(geom: BallGeometry, coeffs, center_coeffs) -> float:
    """``E_center f + theta ||f||`` for ``f = sum coeffs k(z, .) + sum center_coeffs k(c, .)``."""
    C = geom.uset.center.points
    w = geom.uset.center.weights
    Kcc = kernel_block(geom.uset.kernel, C, C)
    mean = float(coeffs @ geom.Kzc @ w + center_coeffs @ Kcc @ w)
    sq = (coeffs @ geom.K_exact @ coeffs + 2.0 * coeffs @ geom.Kzc @ center_coeffs
          + center_coeffs @ Kcc @ center_coeffs)
    return mean + geom.theta * math.sqrt(max(float(sq), 0.0))


def _fold_center(support: SupportSet, uset: UncertaintySet, coeffs, center_coeffs):
    """Move centre coefficients onto identical support points when every atom has one."""
    Z = support.points
    hits = []
    for atom in uset.center.points:
        h = np.nonzero(np.all(Z == atom, axis=1))[0]
        if h.size == 0:
            return coeffs, center_coeffs
        hits.append(h[0])
    coeffs = coeffs.copy()
    np.add.at(coeffs, np.array(hits), center_coeffs)
    return coeffs, np.zeros_like(center_coeffs)
