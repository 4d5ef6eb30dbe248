"""SVD helpers and generalized singular value thresholding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .penalty import Penalty

# A singular value counts as zero when it is <= RANK_RTOL * max(sigma).
# Every rank computation in the package goes through this constant.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``A = U diag(sigma) V^T`` with ``sigma`` descending."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T

    def truncate(self, k: int) -> SvdFactors:
        return SvdFactors(self.U[:, :k], self.sigma[:k], self.V[:, :k])


def _check_finite(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def full_svd(A) -> SvdFactors:
    """Thin SVD with ``k = min(m, n)`` columns.

    LAPACK's divide-and-conquer driver occasionally fails to converge; the
    slower QR-iteration driver is tried before giving up.
    """
    A = _check_finite(A)
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
    return SvdFactors(U, s, Vt.T)


def singular_values(A) -> np.ndarray:
    A = _check_finite(A)
    try:
        return np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(A, compute_uv=False, lapack_driver="gesvd")


def numerical_rank(sigma) -> int:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0 or sigma[0] <= 0:
        return 0
    return int(np.count_nonzero(sigma > RANK_RTOL * sigma.max()))


def nonzero_singular_values(sigma) -> np.ndarray:
    """The leading ``numerical_rank(sigma)`` entries of a descending vector."""
    sigma = np.asarray(sigma, dtype=float)
    return sigma[: numerical_rank(sigma)]


def rank(A) -> int:
    return numerical_rank(singular_values(A))


def truncated_svd(A) -> SvdFactors:
    """Thin SVD cut to the numerical rank of ``A``."""
    f = full_svd(A)
    return f.truncate(numerical_rank(f.sigma))


def svt_with_values(T, p: Penalty, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`svt`, also returning the singular values of the result."""
    f = full_svd(T)
    s = p.prox(f.sigma, eta)
    return (f.U * s) @ f.V.T, s


def svt(T, p: Penalty, eta: float) -> np.ndarray:
    """Apply the scalar prox of ``p`` to every singular value of ``T``.

    This solves ``argmin_X  sum_i R(sigma_i(X)) + eta/2 ||X - T||_F^2``.
    The prox is nondecreasing on [0, inf), so the thresholded values stay
    in descending order.
    """
    return svt_with_values(T, p, eta)[0]


def singular_value_gap(A, B) -> tuple[float, float]:
    """Return ``(||sigma(A) - sigma(B)||_2, ||A - B||_F)``; the first never exceeds the second."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    ds = singular_values(A) - singular_values(B)
    return float(np.linalg.norm(ds)), float(np.linalg.norm(A - B))


def kept_count(keep_fraction: float, k: int) -> int:
    """``ceil(keep_fraction * k)``, guarded against float noise like 0.15*20."""
    return min(k, math.ceil(round(keep_fraction * k, 9)))


def truncate_spectrum(A, keep_fraction: float) -> np.ndarray:
    """Zero all but the ``ceil(keep_fraction * min(m, n))`` largest singular values."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    f = full_svd(A)
    return f.truncate(kept_count(keep_fraction, f.sigma.size)).reconstruct()
