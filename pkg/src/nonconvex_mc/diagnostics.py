"""Numerical checks on PGD solutions and traces.

Gradient and Hessian quantities here are taken along rank-preserving
arcs: a low-rank penalty ``sum_i R(sigma_i(X))`` is not differentiable at
a rank-deficient X in the ambient sense, but it is C^2 on the manifold of
matrices with the same rank.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .penalty import Kind, Penalty
from .solver import IterationTrace, ObservedMatrix, SolverConfig, grad_g
from .svt import SvdFactors, numerical_rank, singular_values, truncated_svd

FREEZE_WINDOW = 10
MIN_RATE_POINTS = 20
MIN_R_SQUARED = 0.9


class DiagnosticsError(ValueError):
    pass


@dataclass(frozen=True)
class ConditionReport:
    sigma_min: float
    r_second: float
    local_min_ok: bool
    restricted_ok: bool
    lq_lambda_bound: float | None = None
    lq_sigma_floor: float | None = None

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class RateEstimate:
    rho_hat: float
    window: tuple[int, int]
    r_squared: float
    points: int
    conclusive: bool

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _factors(X) -> SvdFactors:
    f = truncated_svd(X)
    if f.sigma.size == 0:
        raise DiagnosticsError("matrix has rank 0")
    return f


def grad_penalty_matrix(X, p: Penalty) -> np.ndarray:
    """``U diag(R'(sigma)) V^T`` over the nonzero singular triplets of X."""
    f = _factors(X)
    return (f.U * p.deriv(f.sigma)) @ f.V.T


def hessian_penalty_eigs(X, p: Penalty) -> np.ndarray:
    """The r^2 values ``R''(sigma_i) + R''(sigma_j)``, entry ``i*r + j``."""
    d2 = p.second_deriv(_factors(X).sigma)
    return (d2[:, None] + d2[None, :]).ravel()


def tangent_project(Z, U, V) -> np.ndarray:
    """Projection onto the tangent space of the rank-r manifold at ``U S V^T``."""
    UZ = U.T @ Z
    return U @ UZ + (Z @ V) @ V.T - U @ (UZ @ V) @ V.T


def stationarity_residual(X, data: ObservedMatrix, cfg: SolverConfig) -> float:
    """Scaled norm of the rank-preserving gradient of F at X.

    ``||P_T(grad_g(X)) + lam U R'(S) V^T||_F / max(1, ||X||_F)`` where
    P_T projects onto the tangent space of the fixed-rank manifold. The
    component of ``grad_g`` normal to that manifold is dropped: no
    rank-preserving perturbation sees it.
    """
    f = _factors(X)
    G = tangent_project(grad_g(X, data), f.U, f.V)
    G += cfg.lam * (f.U * cfg.penalty.deriv(f.sigma)) @ f.V.T
    return float(np.linalg.norm(G)) / max(1.0, float(np.linalg.norm(X)))


def normal_residual(X, data: ObservedMatrix) -> float:
    """Norm of the part of ``grad_g`` outside the tangent space, same scaling."""
    f = _factors(X)
    g = grad_g(X, data)
    return float(np.linalg.norm(g - tangent_project(g, f.U, f.V))) / max(1.0, float(np.linalg.norm(X)))


def check_conditions(X, cfg: SolverConfig) -> ConditionReport:
    """Scalar sufficient conditions for a (restricted) local minimizer at X.

    ``local_min_ok`` is ``R''(sigma_r) >= 0``; ``restricted_ok`` is
    ``1 + lam R''(sigma_r) > 0``. For l_q the bound ``sigma^(2-q)/(q(1-q))``
    on lam and the floor ``(2(1-q) lam / L)^(1/(2-q))`` that every nonzero
    singular value of a PGD output must clear are reported as well.
    """
    s = singular_values(X)
    r = numerical_rank(s)
    if r == 0:
        raise DiagnosticsError("matrix has rank 0")
    sigma = float(s[r - 1])
    p = cfg.penalty
    d2 = float(p.second_deriv(sigma))
    lam_bound = floor = None
    if p.kind is Kind.LQ:
        q = p.q
        lam_bound = sigma ** (2 - q) / (q * (1 - q))
        floor = (2 * (1 - q) * cfg.lam / cfg.L) ** (1 / (2 - q))
    return ConditionReport(
        sigma_min=sigma,
        r_second=d2,
        local_min_ok=d2 >= 0,
        restricted_ok=1 + cfg.lam * d2 > 0,
        lq_lambda_bound=lam_bound,
        lq_sigma_floor=floor,
    )


def assert_rank_freeze(trace: IterationTrace, require_converged: bool = True) -> tuple[int, int]:
    """Return ``(k_star, r)``: rank is ``r`` for every row ``k >= k_star``."""
    if require_converged and not trace.converged:
        raise DiagnosticsError(f"trace did not converge (status {trace.status!r})")
    ranks = trace.rank
    if len(ranks) < FREEZE_WINDOW:
        raise DiagnosticsError(f"trace has {len(ranks)} rows, need {FREEZE_WINDOW}")
    tail = ranks[-FREEZE_WINDOW:]
    if any(r != tail[-1] for r in tail):
        raise DiagnosticsError(f"rank still changing in the last {FREEZE_WINDOW} rows: {tail}")
    r = ranks[-1]
    k = len(ranks) - 1
    while k > 0 and ranks[k - 1] == r:
        k -= 1
    return k, r


def estimate_rate(trace: IterationTrace, k_start: int | None = None) -> RateEstimate:
    """Fit ``log(gap_k) ~ a + k log(rho)`` over the rows after the rank freezes.

    ``k_start`` overrides the first row used (default: one past the rank
    freeze point, since the gap at row k compares X^k with X^(k-1)).
    """
    if k_start is None:
        k_star, _ = assert_rank_freeze(trace, require_converged=False)
        k_start = k_star + 1
    k_start = max(int(k_start), 1)
    ks = np.arange(k_start, len(trace))
    gaps = np.asarray(trace.gap, dtype=float)[k_start:]
    if ks.size < MIN_RATE_POINTS:
        raise DiagnosticsError(f"only {ks.size} post-freeze iterations, need {MIN_RATE_POINTS}")
    if np.any(~(gaps > 0)):
        raise DiagnosticsError("gap sequence has non-positive or NaN entries")
    y = np.log(gaps)
    x = ks - ks.mean()
    slope = float(np.dot(x, y - y.mean()) / np.dot(x, x))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    resid = y - y.mean() - slope * x
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-30 * max(1.0, float(np.sum(y**2))):
        r2 = 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    rho = math.exp(slope)
    conclusive = r2 >= MIN_R_SQUARED and ks.size >= 10 and rho < 1
    return RateEstimate(
        rho_hat=rho,
        window=(int(ks[0]), int(ks[-1])),
        r_squared=r2,
        points=int(ks.size),
        conclusive=conclusive,
    )
