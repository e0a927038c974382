"""Command-line entry point: ``mmd-robust <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 solver error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings

import numpy as np

from .dataio import (DEFAULT_SEED, ConfigError, DataError, DatasetSchema, RunManifest,
                     dump_config, load_config, load_csv)
from .detectors import SmoothedLfd, direct_test, np_test, smoothing_block_test
from .kernel_core import KernelSpec, WeightedAtoms, mmd_unbiased_sq, mmd_weighted
from .lfd_solver import (LfdError, LfdSolution, SolverOptions, certify_dual, sample_support,
                         solve_lfd, union_support)
from .sim_harness import ExperimentConfig, SimResult, run_experiment, training_draws
from .uncertainty import build_set, calibrate_radius

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# config helpers


def _kernel(cfg: dict) -> KernelSpec:
    fam = cfg.get("kernel", "gaussian")
    if isinstance(fam, dict):
        return KernelSpec(**fam)
    sigma = float(cfg.get("sigma", cfg.get("bandwidth", 1.0)))
    return KernelSpec(str(fam).lower(), sigma)


def _listify(v):
    if v is None:
        return None
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _schema(cfg: dict) -> DatasetSchema:
    cols = _listify(cfg.get("feature_columns"))
    if cols is None:
        if "dim" not in cfg:
            raise ConfigError("config needs feature_columns (or dim) to read CSV data")
        cols = list(range(int(cfg["dim"])))
    return DatasetSchema(tuple(cols), cfg.get("label_column"), str(cfg.get("delimiter", ",")),
                         bool(cfg.get("has_header", False)))


def _read_samples(cfg: dict, path: str, label_key: str) -> np.ndarray:
    return load_csv(path, _schema(cfg), label=cfg.get(label_key),
                    standardize=bool(cfg.get("standardize", False)))


def _training(cfg: dict):
    """Training samples from CSV files or, failing that, seeded Gaussian draws."""
    if "train0" in cfg or "train1" in cfg:
        if not ("train0" in cfg and "train1" in cfg):
            raise ConfigError("give both train0 and train1")
        return (_read_samples(cfg, cfg["train0"], "label0"),
                _read_samples(cfg, cfg["train1"], "label1"))
    try:
        dim = int(cfg["dim"])
        m = int(cfg["train_m"])
        mean0, mean1 = cfg["mean0"], cfg["mean1"]
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r} (or give train0/train1)") from None
    mean0 = np.broadcast_to(np.asarray(mean0, dtype=float), (dim,))
    mean1 = np.broadcast_to(np.asarray(mean1, dtype=float), (dim,))
    return training_draws(mean0, mean1, m, int(cfg.get("seed", DEFAULT_SEED)))


def _sets(cfg: dict):
    if "theta" not in cfg and not ("theta0" in cfg and "theta1" in cfg):
        raise ConfigError("config needs theta (or theta0 and theta1)")
    kern = _kernel(cfg)
    X0, X1 = _training(cfg)
    th0 = float(cfg.get("theta0", cfg.get("theta", 0.0)))
    th1 = float(cfg.get("theta1", cfg.get("theta", 0.0)))
    return build_set(X0, th0, kern), build_set(X1, th1, kern)


def _support(cfg: dict, set0, set1):
    kind = str(cfg.get("support", "union")).lower()
    if kind == "union":
        return union_support(set0, set1)
    if kind == "random":
        pts = np.vstack([set0.center.points, set1.center.points])
        lo = cfg.get("support_lo")
        hi = cfg.get("support_hi")
        lo = pts.min(axis=0) if lo is None else np.broadcast_to(np.asarray(lo, float), pts.shape[1])
        hi = pts.max(axis=0) if hi is None else np.broadcast_to(np.asarray(hi, float), pts.shape[1])
        N = int(cfg.get("support_size", 50))
        return sample_support(lo, hi, N, int(cfg.get("support_seed", cfg.get("seed", DEFAULT_SEED))))
    raise ConfigError(f"support must be 'union' or 'random', got {kind!r}")


def _solver_opts(cfg: dict) -> SolverOptions:
    opts = SolverOptions()
    for key in ("tol", "max_iters", "step_c", "dykstra_iters", "patience"):
        if key in cfg:
            setattr(opts, key, type(getattr(opts, key))(cfg[key]))
    return opts


def _experiment(cfg: dict) -> ExperimentConfig:
    keys = dict(cfg)
    keys.setdefault("seed", DEFAULT_SEED)
    keys.setdefault("eval_mean0", keys.get("mean0"))
    keys.setdefault("eval_mean1", keys.get("mean1"))
    keys["kernel"] = _kernel(cfg)
    for k in ("sigma", "bandwidth"):
        keys.pop(k, None)
    keys["sample_sizes"] = _listify(keys.get("sample_sizes"))
    try:
        return ExperimentConfig(**keys)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _out_dir(path):
    if path is None:
        return None
    os.makedirs(path, exist_ok=True)
    return path


def _write(directory, name, text, outputs):
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    outputs.append(path)


def _finish(args, argv, cfg, seeds, outputs, t0):
    if args.out is None:
        return
    man = RunManifest(list(argv), cfg, seeds, outputs)
    man.wall_seconds = time.time() - t0
    man.write(args.out)


# ---------------------------------------------------------------------------
# subcommands


def cmd_mmd(args, argv, t0):
    kern = KernelSpec(args.kernel, args.sigma)
    cols = args.columns

    def read(path):
        if cols is None:
            try:
                with open(path, encoding="utf-8") as fh:
                    first = next((ln for ln in fh if ln.strip()), "")
            except OSError as exc:
                raise DataError(f"cannot open {path}: {exc.strerror}") from exc
            use = tuple(range(len(first.split(args.delimiter))))
        else:
            use = tuple(int(c) for c in cols.split(","))
        return load_csv(path, DatasetSchema(use, None, args.delimiter, args.header))

    A = read(args.file_a)
    B = read(args.file_b)
    d = mmd_weighted(kern, WeightedAtoms.empirical(A), WeightedAtoms.empirical(B))
    print(f"mmd {d:.10g}")
    if len(A) >= 2 and len(B) >= 2:
        print(f"mmd2_unbiased {mmd_unbiased_sq(kern, A, B):.10g}")
    return EXIT_OK


def cmd_calibrate(args, argv, t0):
    print(f"{calibrate_radius(args.m, args.delta, args.K):.8g}")
    return EXIT_OK


def cmd_lfd(args, argv, t0):
    cfg = load_config(args.config)
    set0, set1 = _sets(cfg)
    support = _support(cfg, set0, set1)
    sol = solve_lfd(set0, set1, support, _solver_opts(cfg))
    cert = certify_dual(sol, set0, set1)
    out = _out_dir(args.out or ".")
    outputs = []
    _write(out, "lfd_solution.json", sol.to_json(indent=2), outputs)
    _write(out, "dual_certificate.json", json.dumps(cert.to_dict(), indent=2), outputs)
    print(f"objective {sol.objective:.10g}  duality_gap {cert.duality_gap:.3g}  "
          f"iterations {sol.iterations}")
    args.out = out
    _finish(args, argv, cfg, {"seed": cfg.get("seed", DEFAULT_SEED)}, outputs, t0)
    return EXIT_OK


def cmd_test_bayes(args, argv, t0):
    cfg = load_config(args.config)
    set0, set1 = _sets(cfg)
    X = _read_samples(cfg, args.input, "input_label")
    gamma = float(cfg.get("gamma", 0.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = {"direct": direct_test(X, set0, set1, gamma).to_dict()}
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.lfd:
        with open(args.lfd, encoding="utf-8") as fh:
            sol = LfdSolution.from_dict(json.load(fh))
        result["smoothing"] = smoothing_block_test(SmoothedLfd(sol, set0.kernel), X).to_dict()
    print(json.dumps(result, indent=2))
    outputs = []
    if args.out:
        _out_dir(args.out)
        _write(args.out, "decision.json", json.dumps(result, indent=2), outputs)
    _finish(args, argv, cfg, {"seed": cfg.get("seed", DEFAULT_SEED)}, outputs, t0)
    return EXIT_OK


def cmd_test_np(args, argv, t0):
    cfg = load_config(args.config)
    set0, _ = _sets(cfg)
    X = _read_samples(cfg, args.input, "input_label")
    alpha = args.alpha if args.alpha is not None else float(cfg.get("alpha", 0.1))
    result = {"np": np_test(X, set0, alpha).to_dict()}
    print(json.dumps(result, indent=2))
    outputs = []
    if args.out:
        _out_dir(args.out)
        _write(args.out, "decision.json", json.dumps(result, indent=2), outputs)
    _finish(args, argv, cfg, {"seed": cfg.get("seed", DEFAULT_SEED)}, outputs, t0)
    return EXIT_OK


def cmd_simulate(args, argv, t0):
    raw = load_config(args.config)
    exp = _experiment(raw)
    res = run_experiment(exp)
    out = _out_dir(args.out)
    outputs = []
    _write(out, "sim_result.csv", res.to_csv(), outputs)
    _write(out, "sim_result.json", res.to_json(indent=2), outputs)
    _write(out, "effective_config.cfg", _effective_text(exp), outputs)
    for r in res.rows:
        print(f"{r['test']:>10s}  n={r['n']:<5d} error={r['error_rate']:.6g} ± {r['ci']:.3g}")
    _finish(args, argv, exp.to_dict(),
            {"seed": exp.seed, "eval_seed": exp.effective_eval_seed}, outputs, t0)
    return EXIT_OK


def _effective_text(exp: ExperimentConfig) -> str:
    d = exp.to_dict()
    kern = d.pop("kernel")
    d["kernel"] = kern["family"]
    d["sigma"] = kern["bandwidth"]
    if d["eval_seed"] is None:
        d.pop("eval_seed")
    return dump_config(d)


def cmd_report(args, argv, t0):
    jpath = os.path.join(args.input, "sim_result.json")
    cpath = os.path.join(args.input, "sim_result.csv")
    if os.path.exists(jpath):
        with open(jpath, encoding="utf-8") as fh:
            res = SimResult.from_dict(json.load(fh))
    elif os.path.exists(cpath):
        with open(cpath, encoding="utf-8") as fh:
            res = SimResult.from_csv(fh.read())
    else:
        raise DataError(f"no sim_result.json or sim_result.csv in {args.input}")
    print(format_report(res))
    return EXIT_OK


def format_report(res: SimResult) -> str:
    tests = res.tests()
    ns = sorted({r["n"] for r in res.rows})
    table = {(r["test"], r["n"]): r for r in res.rows}
    lines = ["n".rjust(6) + "".join(t.rjust(22) for t in tests)]
    for n in ns:
        cells = []
        for t in tests:
            r = table.get((t, n))
            cells.append("-".rjust(22) if r is None else
                         f"{r['error_rate']:.4g} ± {r['ci']:.2g}".rjust(22))
        lines.append(str(n).rjust(6) + "".join(cells))
    lines.append("")
    lines.append("decay fit of log(error) on n:")
    for t in tests:
        fit = res.decay_fit.get(t, {})
        if fit.get("slope") is None:
            lines.append(f"  {t}: {fit.get('reason', 'not available')}")
        else:
            lines.append(f"  {t}: slope {fit['slope']:.5g}, R^2 {fit['r_squared']:.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmd-robust", description="Robust hypothesis testing with MMD balls.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("mmd", help="MMD and unbiased squared MMD between two sample files")
    s.add_argument("file_a")
    s.add_argument("file_b")
    s.add_argument("--kernel", default="gaussian", choices=["gaussian", "laplacian"])
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--delimiter", default=",")
    s.add_argument("--header", action="store_true", help="first row is a header")
    s.add_argument("--columns", help="comma-separated 0-based feature columns (default: all)")
    s.set_defaults(func=cmd_mmd, out=None)

    s = sub.add_parser("calibrate", help="ball radius from sample size and confidence")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--K", type=float, default=1.0)
    s.set_defaults(func=cmd_calibrate, out=None)

    s = sub.add_parser("lfd", help="solve the finite-support LFD and certify it")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (default: current directory)")
    s.set_defaults(func=cmd_lfd)

    s = sub.add_parser("test-bayes", help="direct (and optionally smoothing) test on a sample block")
    s.add_argument("--config", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--lfd", help="lfd_solution.json from a previous 'lfd' run")
    s.add_argument("--out")
    s.set_defaults(func=cmd_test_bayes)

    s = sub.add_parser("test-np", help="Neyman-Pearson test on a sample block")
    s.add_argument("--config", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--alpha", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_test_np)

    s = sub.add_parser("simulate", help="Monte-Carlo error curves")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("report", help="summary table of a simulate output directory")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(func=cmd_report, out=None)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    t0 = time.time()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        return args.func(args, argv, t0)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LfdError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataError, ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
