"""Command-line interface: ``prox``, ``synth``, ``solve``, ``experiment``, ``diagnose``.

Exit codes: 0 success, 2 usage or input error, 3 solver hit max iterations,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .dataio import PGMFormatError, metrics, observe, random_mask, read_pgm, write_pgm
from .experiment import (
    ExperimentConfig,
    build_problem,
    decrease_violations,
    dump_json,
    fmt,
    read_trace_csv,
    run_experiment,
    write_trace_csv,
)
from .penalty import Penalty
from .solver import CONVERGED, MAX_ITERS, ObservedMatrix, SolverConfig, solve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MAX_ITERS = 3
EXIT_NUMERICAL = 4

SAMPLES = {"rank1": "rank1_10x10.npz"}

log = logging.getLogger("nonconvex_mc")


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


# -- file helpers ---------------------------------------------------------


def write_matrix_csv(X, path) -> None:
    X = np.asarray(X, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"c{j}" for j in range(X.shape[1])])
        for row in X:
            w.writerow([fmt(v) for v in row])


def read_matrix(path) -> np.ndarray:
    """Load a matrix from CSV (header row optional), PGM or .npy."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    suffix = path.suffix.lower()
    try:
        if suffix == ".pgm":
            return read_pgm(path)
        if suffix == ".npy":
            return np.load(path)
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if rows and rows[0] and not _is_number(rows[0][0]):
            rows = rows[1:]
        X = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except PGMFormatError as exc:
        raise InputError(f"{path}: {exc}") from None
    except ValueError as exc:
        raise InputError(f"{path}: cannot parse matrix: {exc}") from None
    if X.ndim != 2 or X.size == 0:
        raise InputError(f"{path}: not a nonempty 2-D matrix")
    return X


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def save_problem(path, data: ObservedMatrix, truth=None, peak=None) -> None:
    """Problem files are .npz archives with ``values``, ``mask`` and optionally ``truth``, ``peak``."""
    arrays = {"values": data.values, "mask": data.mask}
    if truth is not None:
        arrays["truth"] = np.asarray(truth, dtype=float)
    if peak is not None:
        arrays["peak"] = np.array(float(peak))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_problem(path):
    """Return ``(data, truth or None, peak or None)``."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    try:
        with np.load(path) as z:
            values, mask = z["values"], z["mask"]
            truth = z["truth"] if "truth" in z else None
            peak = float(z["peak"]) if "peak" in z else None
        data = ObservedMatrix(values, mask, allow_full=True)
    except (KeyError, ValueError, OSError) as exc:
        raise InputError(f"{path}: invalid problem file: {exc}") from None
    if truth is not None and truth.shape != data.shape:
        raise InputError(f"{path}: truth shape {truth.shape} != data shape {data.shape}")
    return data, truth, peak


def sample_path(name: str) -> Path:
    if name not in SAMPLES:
        raise InputError(f"unknown sample {name!r}; choose from {sorted(SAMPLES)}")
    return Path(str(resources.files("nonconvex_mc") / "data" / SAMPLES[name]))


def penalty_from_args(args) -> Penalty:
    kind = getattr(args, "penalty", None)
    q = getattr(args, "q", None)
    try:
        if kind is None:
            if q is None:
                raise InputError("give --penalty or --q")
            return Penalty.from_q(q)
        if kind == "lq":
            if q is None:
                raise InputError("--penalty lq needs --q")
            return Penalty.lq(q)
        if q is not None and not ((kind == "hard" and q == 0) or (kind == "soft" and q == 1)):
            raise InputError(f"--q {q} conflicts with --penalty {kind}")
        return Penalty(kind)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def solver_config(args, penalty: Penalty, init=None) -> SolverConfig:
    try:
        return SolverConfig(penalty, args.lam, L=args.L, tol=args.tol, max_iters=args.max_iters,
                            init=init, seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None


# -- commands -------------------------------------------------------------


def cmd_prox(args) -> int:
    if args.steps < 1:
        raise InputError("--steps must be >= 1")
    if not args.eta > 0:
        raise InputError("--eta must be positive")
    p = penalty_from_args(args)
    ts = np.linspace(args.t_from, args.t_to, args.steps) if args.steps > 1 else np.array([args.t_from])
    out = p.prox(ts, args.eta)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t", "prox"])
    for t, v in zip(ts, out):
        w.writerow([fmt(t), fmt(v)])
    return EXIT_OK


def _problem_from_source(args):
    cfg = ExperimentConfig(
        source=args.source, m=args.m, n=args.n, rank=args.rank, image_path=args.image,
        strict_low_rank=args.strict_low_rank, keep_fraction=args.keep_fraction,
        obs_fraction=args.obs_fraction, snr_db=args.snr_db, seed=args.seed,
        q_grid=[1.0], lambda_grid=[1.0],
    )
    return build_problem(cfg)


def cmd_synth(args) -> int:
    try:
        prob = _problem_from_source(args)
    except (ValueError, OSError) as exc:
        raise InputError(str(exc)) from None
    save_problem(args.out, prob.data, prob.truth, prob.peak)
    print(f"wrote {args.out}: shape {prob.data.shape}, {int(prob.data.mask.sum())} observed, peak {prob.peak:g}")
    return EXIT_OK


def _solve_inputs(args):
    if args.sample:
        return load_problem(sample_path(args.sample))
    if args.problem:
        return load_problem(args.problem)
    if args.image:
        M = read_matrix(args.image)
        try:
            mask = random_mask(*M.shape, args.obs_fraction, args.seed)
            data = observe(M, mask, args.snr_db, args.seed + 1)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        return data, M, 255.0
    raise InputError("give --problem, --image or --sample")


def cmd_solve(args) -> int:
    data, truth, peak = _solve_inputs(args)
    penalty = penalty_from_args(args)
    init = None if args.init == "default" else args.init
    if args.init_file:
        init = read_matrix(args.init_file)
        if init.shape != data.shape:
            raise InputError(f"init shape {init.shape} != data shape {data.shape}")
    cfg = solver_config(args, penalty, init)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    X, trace = solve(data, cfg)
    write_trace_csv(trace, out / "trace.csv")
    write_matrix_csv(X, out / "solution.csv")
    if args.image:
        write_pgm(X, out / "solution.pgm")

    summary = {
        "status": trace.status,
        "message": trace.message,
        "iterations": trace.iterations,
        "penalty": penalty.name,
        "lambda": cfg.lam,
        "L": cfg.L,
        "tol": cfg.tol,
        "init": cfg.init_mode,
        "objective": trace.objective[-1],
        "rank": trace.rank[-1],
        "sufficient_decrease_violations": decrease_violations(trace, cfg.L),
        "metrics": None,
        "conditions": None,
        "stationarity_residual": None,
        "rate": None,
        "rank_freeze": None,
    }
    if truth is not None:
        if peak is None:
            peak = float(np.abs(truth).max())
        summary["metrics"] = metrics(X, truth, peak).to_dict() | {"peak": peak}
    if trace.rank[-1] > 0:
        summary["conditions"] = diag.check_conditions(X, cfg).to_dict()
        summary["stationarity_residual"] = diag.stationarity_residual(X, data, cfg)
    if trace.converged:
        try:
            k_star, r = diag.assert_rank_freeze(trace)
            summary["rank_freeze"] = {"k_star": k_star, "rank": r}
            summary["rate"] = diag.estimate_rate(trace).to_dict()
        except diag.DiagnosticsError as exc:
            summary["rate"] = {"error": str(exc)}
    dump_json(summary, out / "summary.json")
    print(f"{trace.status}: {trace.iterations} iterations, rank {trace.rank[-1]}, objective {trace.objective[-1]:.10g}")
    if trace.status == CONVERGED:
        return EXIT_OK
    if trace.status == MAX_ITERS:
        return EXIT_MAX_ITERS
    print(f"numerical failure: {trace.message}", file=sys.stderr)
    return EXIT_NUMERICAL


def cmd_experiment(args) -> int:
    if not Path(args.config).exists():
        raise InputError(f"no such file: {args.config}")
    overrides = {"seed": args.seed, "tol": args.tol, "max_iters": args.max_iters, "L": args.L,
                 "output_dir": args.out, "jobs": args.jobs}
    try:
        cfg = ExperimentConfig.from_json(args.config, **overrides)
    except (ValueError, TypeError) as exc:
        raise InputError(f"{args.config}: {exc}") from None
    if not cfg.output_dir:
        raise InputError("no output directory: set output_dir in the config or pass --out")
    results = run_experiment(cfg)
    failed = sum(not c.converged for c in results)
    print(f"{len(results)} runs, {failed} not converged; results in {cfg.output_dir}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    data, _, _ = load_problem(args.problem)
    X = read_matrix(args.solution)
    if X.shape != data.shape:
        raise InputError(f"solution shape {X.shape} != problem shape {data.shape}")
    cfg = solver_config(args, penalty_from_args(args))
    try:
        report = diag.check_conditions(X, cfg)
        resid = diag.stationarity_residual(X, data, cfg)
        normal = diag.normal_residual(X, data)
    except diag.DiagnosticsError as exc:
        raise InputError(f"{args.solution}: {exc}") from None
    out = {
        "stationarity_residual": resid,
        "residual_bound": 100 * cfg.tol,
        "residual_ok": resid <= 100 * cfg.tol,
        "normal_residual": normal,
        "conditions": report.to_dict(),
        "rank_freeze": None,
        "rate": None,
    }
    if args.trace:
        tr = read_trace_csv(args.trace)
        try:
            k_star, r = diag.assert_rank_freeze(tr, require_converged=False)
            out["rank_freeze"] = {"k_star": k_star, "rank": r}
            out["rate"] = diag.estimate_rate(tr).to_dict()
        except diag.DiagnosticsError as exc:
            out["rank_freeze"] = out["rank_freeze"] or {"error": str(exc)}
    if args.out:
        dump_json(out, args.out)
    else:
        import json

        from .experiment import _clean

        json.dump(_clean(out), sys.stdout, indent=2)
        sys.stdout.write("\n")
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def _common(p, solver=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--penalty", choices=["hard", "soft", "lq"])
    p.add_argument("--q", type=float, help="l_q exponent; alone, 0 means hard and 1 soft")
    if solver:
        p.add_argument("--lambda", dest="lam", type=float, default=1.0)
        p.add_argument("--L", type=float, default=1.1)
        p.add_argument("--tol", type=float, default=1e-8)
        p.add_argument("--max-iters", type=int, default=5000)


def _source_flags(p):
    p.add_argument("--source", choices=["synthetic", "dense", "image"], default="synthetic")
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--image", help="8-bit binary PGM")
    p.add_argument("--strict-low-rank", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--keep-fraction", type=float, default=0.15)
    p.add_argument("--obs-fraction", type=float, default=0.5)
    p.add_argument("--snr-db", type=float, default=40.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonconvex-mc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prox", help="tabulate a scalar thresholding function as CSV")
    _common(p, solver=False)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--from", dest="t_from", type=float, default=-3.0)
    p.add_argument("--to", dest="t_to", type=float, default=3.0)
    p.add_argument("--steps", type=int, default=601)
    p.set_defaults(func=cmd_prox)

    p = sub.add_parser("synth", help="generate a completion problem (.npz)")
    p.add_argument("--seed", type=int, default=0)
    _source_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("solve", help="run PGD on one problem")
    _common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--problem", help=".npz problem file from `synth`")
    src.add_argument("--image", help="PGM image; observed through a random mask")
    src.add_argument("--sample", choices=sorted(SAMPLES), help="bundled sample problem")
    p.add_argument("--obs-fraction", type=float, default=0.5)
    p.add_argument("--snr-db", type=float, default=40.0)
    p.add_argument("--init", choices=["default", "zero", "warm"], default="default")
    p.add_argument("--init-file", help="explicit initial matrix (CSV, PGM or .npy)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="run a (q, lambda) grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("diagnose", help="stationarity and minimizer conditions of a solution")
    _common(p)
    p.add_argument("--solution", required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--trace", help="trace.csv from `solve`")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"{parser.prog} {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
