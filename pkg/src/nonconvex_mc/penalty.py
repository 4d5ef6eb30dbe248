"""Scalar sparsity penalties and their proximity operators.

Three penalties are supported: hard (``|x|_0``), soft (``|x|``) and the
``l_q`` quasi-norm ``|x|^q`` with ``0 < q < 1``. Every operator accepts a
scalar or an ndarray and returns the same kind.

The proximity operator of a penalty ``R`` with parameter ``eta`` is

    prox(t) = argmin_x  R(x) + eta/2 * (x - t)**2

For the discontinuous penalties (hard, l_q) the output is either exactly
zero or has magnitude at least ``beta`` (the jump size). At the threshold
point ``|t| == tau`` both branches are minimizers; this module always
returns 0 there.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np

NEWTON_TOL = 1e-12
NEWTON_MAX_ITERS = 100


class Kind(str, enum.Enum):
    HARD = "hard"
    SOFT = "soft"
    LQ = "lq"


@dataclass(frozen=True)
class ThresholdInfo:
    """Threshold point ``tau`` and jump size ``beta`` of a prox."""

    tau: float
    beta: float


@dataclass(frozen=True)
class Penalty:
    kind: Kind
    q: float | None = None

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Kind.LQ:
            if self.q is None or not (0.0 < self.q < 1.0):
                raise ValueError(f"l_q penalty needs 0 < q < 1, got q={self.q!r}")
            object.__setattr__(self, "q", float(self.q))
        elif self.q is not None:
            raise ValueError(f"{kind.value} penalty takes no q parameter")

    @classmethod
    def hard(cls) -> Penalty:
        return cls(Kind.HARD)

    @classmethod
    def soft(cls) -> Penalty:
        return cls(Kind.SOFT)

    @classmethod
    def lq(cls, q: float) -> Penalty:
        return cls(Kind.LQ, q)

    @classmethod
    def from_q(cls, q: float) -> Penalty:
        """Grid convention: ``q == 0`` is hard, ``q == 1`` is soft."""
        if q == 0:
            return cls.hard()
        if q == 1:
            return cls.soft()
        return cls.lq(q)

    @property
    def grid_q(self) -> float:
        """Inverse of :meth:`from_q`."""
        if self.kind is Kind.HARD:
            return 0.0
        if self.kind is Kind.SOFT:
            return 1.0
        return self.q

    @property
    def name(self) -> str:
        if self.kind is Kind.LQ:
            return f"lq(q={self.q:g})"
        return self.kind.value

    # -- penalty values and derivatives ---------------------------------

    def value(self, x):
        """R(x) for scalar or array ``x``; always nonnegative."""
        a = np.abs(np.asarray(x, dtype=float))
        if self.kind is Kind.HARD:
            out = (a != 0).astype(float)
        elif self.kind is Kind.SOFT:
            out = a
        else:
            out = a**self.q
        return _like(x, out)

    def deriv(self, x):
        """R'(x) on the smooth branch ``x != 0``."""
        xa = np.asarray(x, dtype=float)
        if np.any(xa == 0):
            raise ValueError("derivative is undefined at x = 0")
        if self.kind is Kind.HARD:
            out = np.zeros_like(xa)
        elif self.kind is Kind.SOFT:
            out = np.sign(xa)
        else:
            out = self.q * np.abs(xa) ** (self.q - 1) * np.sign(xa)
        return _like(x, out)

    def second_deriv(self, x):
        """R''(x) for ``x > 0``. Nonpositive for all supported penalties."""
        xa = np.asarray(x, dtype=float)
        if np.any(xa <= 0):
            raise ValueError("second derivative is only defined for x > 0")
        if self.kind is Kind.LQ:
            out = self.q * (self.q - 1) * xa ** (self.q - 2)
        else:
            out = np.zeros_like(xa)
        return _like(x, out)

    # -- proximity operator ----------------------------------------------

    def threshold_info(self, eta: float) -> ThresholdInfo:
        _check_eta(eta)
        if self.kind is Kind.HARD:
            b = math.sqrt(2.0 / eta)
            return ThresholdInfo(tau=b, beta=b)
        if self.kind is Kind.SOFT:
            return ThresholdInfo(tau=1.0 / eta, beta=0.0)
        q = self.q
        beta = (2.0 * (1.0 - q) / eta) ** (1.0 / (2.0 - q))
        tau = beta + q * beta ** (q - 1.0) / eta
        return ThresholdInfo(tau=tau, beta=beta)

    def prox(self, t, eta: float):
        """Global minimizer of ``R(x) + eta/2 (x - t)^2``.

        Ties at ``|t| == tau`` resolve to 0.
        """
        _check_eta(eta)
        ta = np.asarray(t, dtype=float)
        a = np.abs(ta)
        s = np.sign(ta)
        if self.kind is Kind.SOFT:
            out = s * np.maximum(a - 1.0 / eta, 0.0)
        elif self.kind is Kind.HARD:
            out = np.where(a > self.threshold_info(eta).tau, ta, 0.0)
        else:
            info = self.threshold_info(eta)
            out = np.zeros_like(a)
            keep = a > info.tau
            if np.any(keep):
                out[keep] = _lq_root(a[keep], self.q, eta, info.beta)
            out = s * out
        return _like(t, out)


def _like(x, out):
    if np.ndim(x) == 0:
        return float(out)
    return out


def _check_eta(eta):
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta!r}")


def _lq_root(a: np.ndarray, q: float, eta: float, beta: float) -> np.ndarray:
    """Solve ``q x^(q-1)/eta + x = a`` on ``[beta, a]`` elementwise.

    Newton from ``x = a``: h is convex and increasing there, so the iterates
    decrease monotonically onto the root. Bisection covers any element that
    leaves the bracket.
    """
    x = a.copy()
    tol = np.maximum(NEWTON_TOL, 8 * np.finfo(float).eps * a)
    for _ in range(NEWTON_MAX_ITERS):
        h = q * x ** (q - 1) / eta + x - a
        if np.all(np.abs(h) <= tol):
            break
        dh = 1.0 - q * (1.0 - q) * x ** (q - 2) / eta
        x_new = x - h / dh
        bad = ~np.isfinite(x_new) | (x_new < beta) | (x_new > a)
        if np.any(bad):
            x_new[bad] = _lq_bisect(a[bad], q, eta, beta)
        x = x_new
    return x


def _lq_bisect(a, q, eta, beta):
    lo = np.full_like(a, beta)
    hi = a.copy()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        h = q * mid ** (q - 1) / eta + mid - a
        lo = np.where(h < 0, mid, lo)
        hi = np.where(h < 0, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * hi):
            break
    return 0.5 * (lo + hi)


@functools.lru_cache(maxsize=16)
def _oracle_grid(p: Penalty, lo: float, hi: float, n: int):
    grid = np.linspace(lo, hi, n)
    grid = np.append(grid, 0.0)
    # sorted by |x| so argmin's first hit is the smallest-magnitude tie
    grid = grid[np.argsort(np.abs(grid), kind="stable")]
    return grid, 0.5 * grid**2, p.value(grid)


def prox_oracle(p: Penalty, t: float, eta: float, lo: float, hi: float, n: int) -> float:
    """Brute-force prox: minimize over ``n`` grid points on ``[lo, hi]`` (plus 0).

    Independent of :meth:`Penalty.prox`; used as a test oracle. The grid
    and penalty values are cached per ``(p, lo, hi, n)``.
    """
    if not lo < hi:
        raise ValueError(f"inverted or empty grid [{lo}, {hi}]")
    if not lo <= 0 <= hi:
        raise ValueError("grid must contain 0")
    if n < 1000:
        raise ValueError(f"need at least 1000 grid points, got {n}")
    if not lo <= t <= hi:
        raise ValueError(f"t={t} lies outside the grid [{lo}, {hi}]")
    _check_eta(eta)
    grid, half_sq, rvals = _oracle_grid(p, float(lo), float(hi), int(n))
    # R(x) + eta/2 (x - t)^2 up to the constant eta t^2 / 2
    obj = rvals + eta * (half_sq - t * grid)
    return float(grid[np.argmin(obj)])
