"""Proximal gradient descent for penalized matrix completion.

Minimizes

    F(X) = 1/2 ||P_Omega(X) - Y_Omega||_F^2 + lam * sum_i R(sigma_i(X))

with the iteration ``X <- svt(X - grad_g(X) / L, R, L / lam)``. For ``L > 1``
every step decreases F by at least ``(L - 1)/2 ||dX||_F^2``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .penalty import Kind, Penalty
from .svt import nonzero_singular_values, singular_values, svt_with_values

log = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class ObservedMatrix:
    """Observed entries ``Y_Omega`` together with the boolean mask ``Omega``.

    Entries outside the mask are zeroed on construction. The mask must be
    nonempty and, unless ``allow_full`` is set, must leave at least one
    entry unobserved.
    """

    values: np.ndarray
    mask: np.ndarray
    allow_full: bool = field(default=False, kw_only=True)

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        values = np.asarray(self.values, dtype=float)
        if mask.ndim != 2 or mask.shape != values.shape:
            raise ValueError(f"values {values.shape} and mask {mask.shape} must be equal 2-D shapes")
        if not mask.any():
            raise ValueError("mask has no observed entries")
        if mask.all() and not self.allow_full:
            raise ValueError("mask observes every entry; pass allow_full=True to permit this")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed values must be finite")
        values = np.where(mask, values, 0.0)
        values.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def fully_observed(cls, Y) -> ObservedMatrix:
        Y = np.asarray(Y, dtype=float)
        return cls(Y, np.ones(Y.shape, dtype=bool), allow_full=True)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def project(self, X) -> np.ndarray:
        """P_Omega(X)."""
        return np.where(self.mask, X, 0.0)

    def project_complement(self, X) -> np.ndarray:
        return np.where(self.mask, 0.0, X)


Init = Union[str, np.ndarray, None]


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one PGD run.

    ``init`` is ``"zero"``, ``"warm"`` (start from the soft-thresholding
    solution with the same lam, L, tol), an explicit matrix, or ``None``
    for the default: zero for soft, warm for hard and l_q.
    """

    penalty: Penalty
    lam: float
    L: float = 1.1
    tol: float = 1e-8
    max_iters: int = 5000
    init: Init = None
    seed: int = 0

    def __post_init__(self):
        if not self.L > 1:
            raise ValueError(f"L must exceed 1, got {self.L}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iters) < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        init = self.init
        if isinstance(init, str) and init not in ("zero", "warm"):
            raise ValueError(f"unknown init mode {init!r}")

    @property
    def eta(self) -> float:
        """Prox parameter of the thresholding step, ``L / lam``."""
        return self.L / self.lam

    @property
    def init_mode(self) -> str:
        if isinstance(self.init, np.ndarray):
            return "given"
        if self.init is None:
            return "zero" if self.penalty.kind is Kind.SOFT else "warm"
        return self.init


@dataclass
class IterationTrace:
    """Per-iterate record of a run.

    Row ``k`` describes iterate ``X^k`` (row 0 is the initial point):
    ``objective[k] = F(X^k)``, ``gap[k] = ||X^k - X^(k-1)||_F / sqrt(mn)``
    (NaN for row 0), ``rank[k]``, ``sigma_min[k]`` (smallest nonzero
    singular value, 0 for the zero matrix) and ``ms[k]``, the wall time
    of producing that iterate.
    """

    shape: tuple[int, int]
    objective: list[float] = field(default_factory=list)
    gap: list[float] = field(default_factory=list)
    rank: list[int] = field(default_factory=list)
    sigma_min: list[float] = field(default_factory=list)
    ms: list[float] = field(default_factory=list)
    status: str = MAX_ITERS
    message: str = ""

    def append(self, objective, gap, rank, sigma_min, ms):
        self.objective.append(float(objective))
        self.gap.append(float(gap))
        self.rank.append(int(rank))
        self.sigma_min.append(float(sigma_min))
        self.ms.append(float(ms))

    def __len__(self):
        return len(self.objective)

    @property
    def iterations(self) -> int:
        """Number of PGD steps taken."""
        return max(len(self) - 1, 0)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def step_norms(self) -> np.ndarray:
        """Unnormalized ``||X^k - X^(k-1)||_F`` for k >= 1."""
        m, n = self.shape
        return np.asarray(self.gap[1:]) * math.sqrt(m * n)

    def rows(self):
        for k in range(len(self)):
            yield k, self.objective[k], self.gap[k], self.rank[k], self.sigma_min[k], self.ms[k]


def _check_shape(X, data):
    X = np.asarray(X, dtype=float)
    if X.shape != data.shape:
        raise ValueError(f"shape mismatch: X {X.shape} vs data {data.shape}")
    return X


def penalty_term(sigma, p: Penalty) -> float:
    """``sum_i R(sigma_i)`` over the numerically nonzero singular values."""
    return math.fsum(np.atleast_1d(p.value(nonzero_singular_values(sigma))))


def _fit(X, data):
    r = (data.project(X) - data.values).ravel()
    return 0.5 * float(r @ r)


def objective(X, data: ObservedMatrix, cfg: SolverConfig) -> float:
    X = _check_shape(X, data)
    return _fit(X, data) + cfg.lam * penalty_term(singular_values(X), cfg.penalty)


def grad_g(X, data: ObservedMatrix) -> np.ndarray:
    """Gradient of the data term, ``P_Omega(X) - Y_Omega``."""
    X = _check_shape(X, data)
    return data.project(X) - data.values


def _step(X, data, cfg):
    return svt_with_values(X - grad_g(X, data) / cfg.L, cfg.penalty, cfg.eta)


def pgd_step(X, data: ObservedMatrix, cfg: SolverConfig) -> np.ndarray:
    """One PGD update ``svt(X - grad_g(X)/L, R, L/lam)``."""
    X = _check_shape(X, data)
    return _step(X, data, cfg)[0]


def _describe(X, data, cfg, s=None):
    # s, when given, must be the singular values of X (the prox outputs of a step)
    if s is None:
        s = singular_values(X)
    s = np.sort(s)[::-1]
    nz = nonzero_singular_values(s)
    obj = _fit(X, data) + cfg.lam * penalty_term(s, cfg.penalty)
    return obj, nz.size, (float(nz[-1]) if nz.size else 0.0)


def warm_start_nuclear(data: ObservedMatrix, cfg: SolverConfig) -> np.ndarray:
    """Solution of the soft-thresholding (nuclear norm) problem with the same lam, L, tol."""
    soft = replace(cfg, penalty=Penalty.soft(), init="zero")
    X, _ = solve(data, soft)
    return X


def initial_point(data: ObservedMatrix, cfg: SolverConfig) -> np.ndarray:
    mode = cfg.init_mode
    if mode == "given":
        return _check_shape(cfg.init, data).copy()
    if mode == "warm":
        return warm_start_nuclear(data, cfg)
    return np.zeros(data.shape)


def solve(data: ObservedMatrix, cfg: SolverConfig) -> tuple[np.ndarray, IterationTrace]:
    """Run PGD until the normalized gap drops below ``cfg.tol`` or ``max_iters``.

    Never raises on non-convergence or numerical trouble: ``trace.status``
    is one of ``"converged"``, ``"max_iters"``, ``"numerical_failure"``,
    and the returned matrix is the last finite iterate.
    """
    m, n = data.shape
    trace = IterationTrace(shape=(m, n))
    t0 = time.perf_counter()
    X = initial_point(data, cfg)
    obj, r, smin = _describe(X, data, cfg)
    trace.append(obj, math.nan, r, smin, 1e3 * (time.perf_counter() - t0))
    scale = math.sqrt(m * n)
    for k in range(1, int(cfg.max_iters) + 1):
        t0 = time.perf_counter()
        try:
            X_new, s = _step(X, data, cfg)
            if not np.all(np.isfinite(X_new)):
                raise FloatingPointError("iterate has non-finite entries")
            obj, r, smin = _describe(X_new, data, cfg, s)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            trace.status = NUMERICAL_FAILURE
            trace.message = f"iteration {k}: {exc}"
            log.warning("PGD numerical failure at iteration %d: %s", k, exc)
            return X, trace
        gap = float(np.linalg.norm(X_new - X)) / scale
        X = X_new
        trace.append(obj, gap, r, smin, 1e3 * (time.perf_counter() - t0))
        if gap < cfg.tol:
            trace.status = CONVERGED
            return X, trace
    trace.status = MAX_ITERS
    trace.message = f"gap {trace.gap[-1]:.3e} >= tol {cfg.tol:g} after {cfg.max_iters} iterations"
    return X, trace
