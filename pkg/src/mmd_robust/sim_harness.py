"""Seeded Monte-Carlo estimation of detector error rates.

Randomness is derived from one integer seed with ``numpy.random.SeedSequence``
spawn keys, so every trial owns an independent stream:

* training draws for hypothesis ``l`` use key ``(0, l)`` under ``seed``;
* evaluation trial ``t`` at sample size ``n`` uses key ``(1, n, t)`` (Bayes)
  or ``(1, n, l, t)`` (Neyman-Pearson) under ``eval_seed`` (defaults to ``seed``).

Changing ``eval_seed`` therefore never touches the uncertainty sets or LFDs.
Normal variates come from ``Generator.standard_normal`` over PCG64, which
uses the ziggurat method.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import logsumexp

from .detectors import SmoothedLfd, np_threshold
from .kernel_core import KernelFamily, KernelSpec, kernel_block, mmd_weighted
from .lfd_solver import LfdSolution, SolverOptions, solve_lfd, union_support
from .uncertainty import UncertaintySet, build_set, check_non_overlap

__all__ = [
    "ExperimentMode",
    "ExperimentConfig",
    "SimResult",
    "gen_gaussian",
    "median_heuristic_bandwidth",
    "binomial_ci",
    "fit_decay",
    "training_draws",
    "build_sets",
    "run_bayes_experiment",
    "run_np_experiment",
    "run_experiment",
]


class ExperimentMode(str, enum.Enum):
    BAYES = "bayes"
    NEYMAN_PEARSON = "np"


def _vec(v, name):
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be a finite 1-D vector")
    return a


@dataclass
class ExperimentConfig:
    mode: ExperimentMode
    dim: int
    train_m: int
    mean0: np.ndarray
    mean1: np.ndarray
    eval_mean0: np.ndarray
    eval_mean1: np.ndarray
    theta: float
    sample_sizes: list
    trials: int
    seed: int
    kernel: KernelSpec = field(default_factory=KernelSpec.gaussian)
    alpha: float = 0.1
    gamma: float = 0.0
    eval_seed: int | None = None

    def __post_init__(self):
        self.mode = ExperimentMode(self.mode)
        if isinstance(self.kernel, dict):
            self.kernel = KernelSpec(**self.kernel)
        for name in ("mean0", "mean1", "eval_mean0", "eval_mean1"):
            v = _vec(getattr(self, name), name)
            if v.size == 1 and self.dim > 1:
                v = np.full(self.dim, v[0])
            if v.size != self.dim:
                raise ValueError(f"{name} has length {v.size}, expected dim={self.dim}")
            setattr(self, name, v)
        self.sample_sizes = [int(n) for n in self.sample_sizes]
        if not self.sample_sizes or any(n < 1 for n in self.sample_sizes):
            raise ValueError("sample_sizes must be a nonempty list of positive counts")
        if any(b <= a for a, b in zip(self.sample_sizes, self.sample_sizes[1:])):
            raise ValueError("sample_sizes must be strictly increasing")
        if self.trials < 100:
            raise ValueError(f"trials must be >= 100, got {self.trials}")
        if self.dim < 1 or self.train_m < 1:
            raise ValueError("dim and train_m must be positive")
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    @property
    def effective_eval_seed(self) -> int:
        return self.seed if self.eval_seed is None else self.eval_seed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["kernel"] = self.kernel.to_dict()
        for name in ("mean0", "mean1", "eval_mean0", "eval_mean1"):
            d[name] = getattr(self, name).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)


@dataclass
class SimResult:
    """Error rates per (test, n) with 95% binomial half-widths and decay fits."""

    rows: list
    decay_fit: dict
    config: dict | None = None
    extras: dict = field(default_factory=dict)

    def curve(self, test: str):
        ns = [r["n"] for r in self.rows if r["test"] == test]
        errs = [r["error_rate"] for r in self.rows if r["test"] == test]
        return np.array(ns), np.array(errs)

    def tests(self) -> list:
        return list(dict.fromkeys(r["test"] for r in self.rows))

    def to_dict(self) -> dict:
        return {"rows": self.rows, "decay_fit": self.decay_fit,
                "config": self.config, "extras": self.extras}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SimResult":
        return cls(d["rows"], d.get("decay_fit", {}), d.get("config"), d.get("extras", {}))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["test", "n", "error_rate", "ci", "trials"])
        for r in self.rows:
            w.writerow([r["test"], r["n"], f"{r['error_rate']:.8g}", f"{r['ci']:.8g}", r["trials"]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SimResult":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append({"test": rec["test"], "n": int(rec["n"]),
                         "error_rate": float(rec["error_rate"]), "ci": float(rec["ci"]),
                         "trials": int(rec["trials"])})
        res = cls(rows, {})
        res.decay_fit = _fit_all(res)
        return res


# ---------------------------------------------------------------------------
# generators and small statistics


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def gen_gaussian(mean, n: int, seed) -> np.ndarray:
    """``n`` draws from ``N(mean, I)``; ``seed`` may be an int or a SeedSequence."""
    mean = _vec(mean, "mean")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return mean + _rng(seed).standard_normal((n, mean.size))


def median_heuristic_bandwidth(samples) -> float:
    """Median pairwise Euclidean distance."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least 2 samples")
    med = float(np.median(pdist(X)))
    if med <= 0:
        raise ValueError("median pairwise distance is zero (points coincide)")
    return med


def binomial_ci(p: float, trials: int) -> float:
    """95% normal-approximation half-width ``1.96 sqrt(p (1 - p) / trials)``."""
    return 1.96 * math.sqrt(p * (1.0 - p) / trials)


def fit_decay(points) -> tuple[float, float]:
    """OLS of ``log(error)`` on ``n`` over the points with positive error.

    Returns ``(slope, r_squared)``; ``r_squared`` is 0 when the errors are constant.
    """
    pts = [(float(n), float(e)) for n, e in points if e > 0]
    if len(pts) < 3:
        raise ValueError("decay too fast to fit: fewer than 3 points with positive error")
    n = np.array([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    if np.ptp(n) == 0:
        raise ValueError("all points share the same n")
    slope, icpt = np.polyfit(n, y, 1)
    resid = y - (slope * n + icpt)
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst <= 1e-300:
        return 0.0, 0.0
    return float(slope), float(1.0 - np.sum(resid**2) / sst)


def _fit_all(res: SimResult) -> dict:
    out = {}
    for t in res.tests():
        ns, errs = res.curve(t)
        try:
            slope, r2 = fit_decay(zip(ns, errs))
            out[t] = {"slope": slope, "r_squared": r2}
        except ValueError as exc:
            out[t] = {"slope": None, "r_squared": None, "reason": str(exc)}
    return out


# ---------------------------------------------------------------------------
# experiment plumbing


def _eval_seed(cfg: ExperimentConfig, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(cfg.effective_eval_seed, spawn_key=(1, *key))


def training_draws(mean0, mean1, m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``m`` training samples per hypothesis that an experiment with ``seed`` uses."""
    return (gen_gaussian(mean0, m, np.random.SeedSequence(seed, spawn_key=(0, 0))),
            gen_gaussian(mean1, m, np.random.SeedSequence(seed, spawn_key=(0, 1))))


def build_sets(cfg: ExperimentConfig) -> tuple[UncertaintySet, UncertaintySet]:
    """Draw the training samples and build both balls; raises if they overlap."""
    X0, X1 = training_draws(cfg.mean0, cfg.mean1, cfg.train_m, cfg.seed)
    set0 = build_set(X0, cfg.theta, cfg.kernel)
    set1 = build_set(X1, cfg.theta, cfg.kernel)
    if not check_non_overlap(set0, set1):
        raise ValueError("uncertainty sets overlap for this training draw; "
                         "lower theta or change the seed")
    return set0, set1


class _CenterStats:
    """Pre-computed pieces of ``MMD(Pn, center)`` for repeated evaluation."""

    def __init__(self, uset: UncertaintySet):
        self.kernel = uset.kernel
        self.points = uset.center.points
        self.w = uset.center.weights
        self.cc = float(self.w @ kernel_block(self.kernel, self.points, self.points) @ self.w)
        self.theta = uset.radius

    def mmd(self, X: np.ndarray, Kxx_mean: float, Kxc: np.ndarray | None = None) -> float:
        if Kxc is None:
            Kxc = kernel_block(self.kernel, X, self.points)
        val = Kxx_mean - 2.0 * float(np.mean(Kxc @ self.w)) + self.cc
        return math.sqrt(max(val, 0.0))


def _log_kernel(spec: KernelSpec, X, Z):
    from scipy.spatial.distance import cdist

    if spec.family is KernelFamily.GAUSSIAN:
        return -cdist(X, Z, "sqeuclidean") / (2.0 * spec.bandwidth**2)
    return -cdist(X, Z, "cityblock") / spec.bandwidth


def _finish(rows, cfg, extras) -> SimResult:
    res = SimResult(rows, {}, cfg.to_dict(), extras)
    res.decay_fit = _fit_all(res)
    return res


def _row(test, n, errors, trials):
    p = errors / trials
    return {"test": test, "n": int(n), "error_rate": p, "ci": binomial_ci(p, trials),
            "trials": int(trials)}


def run_bayes_experiment(cfg: ExperimentConfig, solver_opts: SolverOptions | None = None,
                         lfd: LfdSolution | None = None) -> SimResult:
    """Bayes error of the smoothing test and the direct test under equal priors.

    The LFD is solved on the union of the training samples.  Each trial draws
    the true hypothesis with probability 1/2, then ``n`` samples from the
    matching evaluation Gaussian.  The smoothing test sums per-sample
    log-likelihood ratios over the block; the direct test uses ``cfg.gamma``.
    """
    if cfg.mode is not ExperimentMode.BAYES:
        raise ValueError("run_bayes_experiment needs mode='bayes'")
    set0, set1 = build_sets(cfg)
    support = union_support(set0, set1)
    if lfd is None:
        lfd = solve_lfd(set0, set1, support, solver_opts)
    smooth = SmoothedLfd(lfd, cfg.kernel)
    Z = smooth.support
    with np.errstate(divide="ignore"):
        logp0 = np.log(lfd.p0)
        logp1 = np.log(lfd.p1)
    c0, c1 = _CenterStats(set0), _CenterStats(set1)
    means = (cfg.eval_mean0, cfg.eval_mean1)

    rows = []
    for n in cfg.sample_sizes:
        err_s = err_d = 0
        for t in range(cfg.trials):
            rng = _rng(_eval_seed(cfg, n, t))
            h = int(rng.integers(2))
            X = means[h] + rng.standard_normal((n, cfg.dim))
            # smoothing test on the block
            LK = _log_kernel(cfg.kernel, X, Z)
            l1 = logsumexp(LK + logp1, axis=1)
            l0 = logsumexp(LK + logp0, axis=1)
            dec_s = float(np.sum(l1 - l0)) >= 0.0
            # direct test; the support is the two centres stacked, so reuse its Gram
            Kxz = np.exp(LK)
            kxx = float(kernel_block(cfg.kernel, X, X).mean())
            m0 = len(c0.w)
            stat = c0.mmd(X, kxx, Kxz[:, :m0]) - c1.mmd(X, kxx, Kxz[:, m0:])
            dec_d = stat >= cfg.gamma
            err_s += dec_s != bool(h)
            err_d += dec_d != bool(h)
        rows.append(_row("smoothing", n, err_s, cfg.trials))
        rows.append(_row("direct", n, err_d, cfg.trials))
    extras = {"lfd_objective": lfd.objective, "lfd_iterations": lfd.iterations,
              "lfd_duality_gap": lfd.duality_gap}
    return _finish(rows, cfg, extras)


def run_np_experiment(cfg: ExperimentConfig) -> SimResult:
    """Type-I error under ``eval_mean0`` and type-II error under ``eval_mean1`` of ``np_test``."""
    if cfg.mode is not ExperimentMode.NEYMAN_PEARSON:
        raise ValueError("run_np_experiment needs mode='np'")
    set0, set1 = build_sets(cfg)
    c0 = _CenterStats(set0)
    rows = []
    thresholds = {}
    for n in cfg.sample_sizes:
        thr = np_threshold(n, cfg.kernel.bound, cfg.alpha)
        thresholds[n] = thr
        errs = [0, 0]
        for h, mean in enumerate((cfg.eval_mean0, cfg.eval_mean1)):
            for t in range(cfg.trials):
                X = mean + _rng(_eval_seed(cfg, n, h, t)).standard_normal((n, cfg.dim))
                kxx = float(kernel_block(cfg.kernel, X, X).mean())
                stat = max(c0.mmd(X, kxx) - c0.theta, 0.0)
                accept = stat > thr
                errs[h] += accept if h == 0 else not accept
        rows.append(_row("type_I", n, errs[0], cfg.trials))
        rows.append(_row("type_II", n, errs[1], cfg.trials))
    extras = {"center_distance": mmd_weighted(cfg.kernel, set0.center, set1.center),
              "thresholds": {str(k): v for k, v in thresholds.items()}}
    return _finish(rows, cfg, extras)


def run_experiment(cfg: ExperimentConfig, **kw) -> SimResult:
    if cfg.mode is ExperimentMode.BAYES:
        return run_bayes_experiment(cfg, **kw)
    return run_np_experiment(cfg)
