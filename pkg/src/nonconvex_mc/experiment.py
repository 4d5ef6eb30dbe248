"""(q, lambda) grid experiments with nuclear-norm warm starts.

For each lambda the soft-thresholding problem is solved once from zero;
that solution is the ``q = 1`` cell and the initial point of every other
cell at the same lambda. ``q = 0`` is the hard penalty.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .dataio import (
    SyntheticSpec,
    decaying_matrix,
    metrics,
    observe,
    random_mask,
    read_pgm,
    synth_low_rank,
)
from .penalty import Penalty
from .solver import IterationTrace, ObservedMatrix, SolverConfig, solve
from .svt import truncate_spectrum

log = logging.getLogger(__name__)

RESULTS_HEADER = ["q", "lambda", "psnr_db", "rel_err", "rank", "iters", "rho_hat", "converged"]
TRACE_HEADER = ["iter", "objective", "gap", "rank", "sigma_min", "ms"]


def fmt(x) -> str:
    """17 significant digits, the CSV/JSON float convention of this package."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x) + 0.0, ".17g")


def write_trace_csv(trace: IterationTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in trace.rows():
            w.writerow([fmt(v) for v in row])


def read_trace_csv(path) -> IterationTrace:
    """Inverse of :func:`write_trace_csv`. Status is not stored in the CSV and comes back as max_iters."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trace")
    tr = IterationTrace(shape=(1, 1))
    for r in rows:
        tr.append(float(r["objective"]), float(r["gap"]), int(r["rank"]), float(r["sigma_min"]), float(r["ms"]))
    return tr


@dataclass
class ExperimentConfig:
    """Grid experiment description, loadable from JSON.

    ``source`` is ``"synthetic"`` (random ``A B^T`` of rank ``rank``),
    ``"dense"`` (a matrix with exponentially decaying spectrum, a stand-in
    for a natural image) or ``"image"`` (an 8-bit PGM at ``image_path``).
    With ``strict_low_rank`` the dense/image matrix keeps only its largest
    ``ceil(keep_fraction * min(m, n))`` singular values.
    """

    source: str = "synthetic"
    m: int = 64
    n: int = 64
    rank: int = 5
    image_path: str | None = None
    strict_low_rank: bool = True
    keep_fraction: float = 0.15
    decay: float = 0.15
    q_grid: list = field(default_factory=lambda: [0.1, 0.3, 0.5, 0.7, 0.9, 1.0])
    lambda_grid: list = field(default_factory=lambda: [1.0, 10.0, 100.0])
    L: float = 1.1
    tol: float = 1e-8
    max_iters: int = 5000
    obs_fraction: float = 0.5
    snr_db: float = 40.0
    seed: int = 0
    peak: float | None = None
    output_dir: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.source not in ("synthetic", "dense", "image"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "image" and not self.image_path:
            raise ValueError("image source needs image_path")
        if not self.q_grid or not self.lambda_grid:
            raise ValueError("q_grid and lambda_grid must be nonempty")
        for q in self.q_grid:
            if not 0 <= q <= 1:
                raise ValueError(f"q values must lie in [0, 1], got {q}")
        for lam in self.lambda_grid:
            if not lam > 0:
                raise ValueError(f"lambda values must be positive, got {lam}")
        if not self.L > 1:
            raise ValueError(f"L must exceed 1, got {self.L}")
        if not 0 < self.keep_fraction <= 1:
            raise ValueError(f"keep_fraction must lie in (0, 1], got {self.keep_fraction}")
        self.q_grid = sorted(float(q) for q in self.q_grid)
        self.lambda_grid = sorted(float(v) for v in self.lambda_grid)

    @classmethod
    def from_json(cls, path, **overrides) -> ExperimentConfig:
        with open(path) as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)

    def to_dict(self):
        d = asdict(self)
        if math.isinf(d["snr_db"]):
            d["snr_db"] = "inf"
        return d


@dataclass
class Problem:
    truth: np.ndarray
    data: ObservedMatrix
    peak: float


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Ground truth, noisy observations and the PSNR peak for ``cfg``.

    The peak is ``cfg.peak`` if set, else 255 for images and ``max|M|``
    for generated matrices.
    """
    if cfg.source == "synthetic":
        spec = SyntheticSpec(cfg.m, cfg.n, cfg.rank, cfg.obs_fraction, cfg.snr_db, cfg.seed)
        M, data = synth_low_rank(spec)
        peak = float(np.abs(M).max())
    else:
        ss = np.random.SeedSequence(cfg.seed).spawn(3)
        if cfg.source == "image":
            M = read_pgm(cfg.image_path)
            peak = 255.0
        else:
            M = decaying_matrix(cfg.m, cfg.n, cfg.decay, seed=int(ss[0].generate_state(1)[0]))
            peak = None
        if cfg.strict_low_rank:
            M = truncate_spectrum(M, cfg.keep_fraction)
        if peak is None:
            peak = float(np.abs(M).max())
        m, n = M.shape
        mask = random_mask(m, n, cfg.obs_fraction, int(ss[1].generate_state(1)[0]))
        data = observe(M, mask, cfg.snr_db, int(ss[2].generate_state(1)[0]))
    if cfg.peak is not None:
        peak = float(cfg.peak)
    return Problem(M, data, peak)


@dataclass
class CellResult:
    q: float
    lam: float
    psnr_db: float
    rel_err: float
    rank: int
    iters: int
    rho_hat: float
    converged: bool
    status: str
    sigma_min: float
    sigma_floor: float | None
    restricted_ok: bool | None
    stationarity: float | None
    sufficient_decrease_violations: int
    solution: np.ndarray | None = field(default=None, repr=False)
    trace: IterationTrace | None = field(default=None, repr=False)

    def csv_row(self):
        return [fmt(self.q), fmt(self.lam), fmt(self.psnr_db), fmt(self.rel_err), fmt(self.rank),
                fmt(self.iters), fmt(self.rho_hat), fmt(self.converged)]

    def summary(self):
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("solution", "trace")}


def decrease_violations(trace: IterationTrace, L: float, slack: float = 1e-10, rel_slack: float = 1e-14) -> int:
    """Count iterations with ``F(X^k) > F(X^(k-1)) - (L-1)/2 ||dX||^2 + tol``.

    ``tol = slack + rel_slack * |F(X^(k-1))|``; the relative part absorbs
    float64 rounding of objectives in the 1e5..1e6 range.
    """
    F = np.asarray(trace.objective)
    d2 = trace.step_norms() ** 2
    tol = slack + rel_slack * np.abs(F[:-1])
    return int(np.count_nonzero(F[1:] > F[:-1] - 0.5 * (L - 1) * d2 + tol))


def evaluate_cell(problem: Problem, q: float, lam: float, X, trace: IterationTrace, L: float) -> CellResult:
    p = Penalty.from_q(q)
    cfg = SolverConfig(p, lam, L=L)
    met = metrics(X, problem.truth, problem.peak)
    r = trace.rank[-1]
    try:
        rho = diag.estimate_rate(trace).rho_hat if trace.converged else math.nan
    except diag.DiagnosticsError:
        rho = math.nan
    floor = restricted = stat = None
    if r > 0:
        rep = diag.check_conditions(X, cfg)
        restricted = rep.restricted_ok
        floor = rep.lq_sigma_floor
        stat = diag.stationarity_residual(X, problem.data, cfg)
    return CellResult(
        q=q, lam=lam, psnr_db=met.psnr_db, rel_err=met.rel_err, rank=r, iters=trace.iterations,
        rho_hat=rho, converged=trace.converged, status=trace.status, sigma_min=trace.sigma_min[-1],
        sigma_floor=floor, restricted_ok=restricted, stationarity=stat,
        sufficient_decrease_violations=decrease_violations(trace, L),
        solution=X, trace=trace,
    )


def _run_cell(args):
    problem, q, lam, cfg, init = args
    scfg = SolverConfig(Penalty.from_q(q), lam, L=cfg.L, tol=cfg.tol, max_iters=cfg.max_iters,
                        init=init, seed=cfg.seed)
    X, tr = solve(problem.data, scfg)
    return evaluate_cell(problem, q, lam, X, tr, cfg.L)


def run_grid(cfg: ExperimentConfig, problem: Problem | None = None) -> list[CellResult]:
    """Solve every (q, lambda) cell; results sorted by (q, lambda)."""
    problem = problem or build_problem(cfg)
    results = []
    nonsoft = [q for q in cfg.q_grid if q < 1]
    for lam in cfg.lambda_grid:
        soft = _run_cell((problem, 1.0, lam, cfg, "zero"))
        log.info("lambda=%g soft: psnr %.2f dB, %d iters", lam, soft.psnr_db, soft.iters)
        if 1.0 in cfg.q_grid:
            results.append(soft)
        jobs = [(problem, q, lam, cfg, soft.solution) for q in nonsoft]
        if cfg.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
                cells = list(ex.map(_run_cell, jobs))
        else:
            cells = [_run_cell(j) for j in jobs]
        for c in cells:
            log.info("lambda=%g q=%g: psnr %.2f dB, rank %d, %d iters", lam, c.q, c.psnr_db, c.rank, c.iters)
        results.extend(cells)
    results.sort(key=lambda c: (c.q, c.lam))
    return results


def best_by_q(results: list[CellResult]) -> dict:
    """Best cell (by PSNR) per q, the best soft cell and the best nonconvex cell."""
    by_q = {}
    for c in results:
        if c.q not in by_q or c.psnr_db > by_q[c.q].psnr_db:
            by_q[c.q] = c
    soft = by_q.get(1.0)
    nonconvex = [c for q, c in by_q.items() if q < 1]
    best_nc = max(nonconvex, key=lambda c: c.psnr_db) if nonconvex else None
    return {
        "per_q": [_brief(c) for q, c in sorted(by_q.items())],
        "soft_baseline": _brief(soft) if soft else None,
        "best_nonconvex": _brief(best_nc) if best_nc else None,
        "psnr_gain_db": (best_nc.psnr_db - soft.psnr_db) if (soft and best_nc) else None,
    }


def _brief(c: CellResult):
    return {"q": c.q, "lambda": c.lam, "psnr_db": c.psnr_db, "rel_err": c.rel_err, "rank": c.rank,
            "iters": c.iters, "converged": c.converged}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o))


def _clean(o):
    """Replace non-finite floats, which JSON cannot carry, with strings."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    return o


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, default=_json_default)
        fh.write("\n")


def write_outputs(cfg: ExperimentConfig, problem: Problem, results: list[CellResult], out_dir) -> None:
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    dump_json(cfg.to_dict() | {"peak_used": problem.peak}, out / "config.json")
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for c in results:
            w.writerow(c.csv_row())
    for c in results:
        write_trace_csv(c.trace, out / "traces" / f"q{c.q:g}_lambda{c.lam:.6g}.csv")
    dump_json([c.summary() for c in results], out / "runs.json")
    dump_json(best_by_q(results) | {"peak": problem.peak}, out / "best.json")


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[CellResult]:
    out_dir = out_dir or cfg.output_dir
    problem = build_problem(cfg)
    results = run_grid(cfg, problem)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_outputs(cfg, problem, results, out_dir)
    return results
