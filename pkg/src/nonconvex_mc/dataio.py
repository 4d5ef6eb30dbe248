"""Problem generation, noise, recovery metrics and 8-bit PGM I/O."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .solver import ObservedMatrix


class PGMFormatError(ValueError):
    """Raised for malformed PGM files; ``field`` names the offending header part."""

    def __init__(self, field: str, message: str):
        super().__init__(f"PGM {field}: {message}")
        self.field = field


@dataclass(frozen=True)
class SyntheticSpec:
    m: int
    n: int
    rank: int
    obs_fraction: float = 0.5
    snr_db: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive")
        if not 1 <= self.rank <= min(self.m, self.n):
            raise ValueError(f"rank must lie in [1, {min(self.m, self.n)}], got {self.rank}")
        if not 0.0 < self.obs_fraction < 1.0:
            raise ValueError(f"obs_fraction must lie in (0, 1), got {self.obs_fraction}")


@dataclass(frozen=True)
class Metrics:
    rel_err: float
    psnr_db: float

    def to_dict(self):
        return {"rel_err": self.rel_err, "psnr_db": self.psnr_db}


def _seeds(seed: int, k: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def random_mask(m: int, n: int, fraction: float, seed: int) -> np.ndarray:
    """Boolean mask with exactly ``round(fraction * m * n)`` entries, uniform without replacement."""
    if m * n < 2:
        raise ValueError(f"degenerate shape {m}x{n}")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    count = round(fraction * m * n)
    if not 0 < count < m * n:
        raise ValueError(f"fraction {fraction} of {m * n} entries gives an empty or full mask")
    rng = np.random.default_rng(seed)
    mask = np.zeros(m * n, dtype=bool)
    mask[rng.choice(m * n, size=count, replace=False)] = True
    return mask.reshape(m, n)


def add_noise(X, snr_db: float, seed: int, mask=None) -> np.ndarray:
    """Add i.i.d. Gaussian noise at exactly ``snr_db``.

    The realized noise is rescaled so that ``||X||^2 / ||N||^2`` equals
    ``10**(snr_db/10)``. With ``mask`` given, both energies are taken over
    the masked entries and noise is only added there.
    """
    X = np.asarray(X, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return X.copy()
    sel = np.ones(X.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    signal = float(np.sum(X[sel] ** 2))
    if signal == 0:
        raise ValueError("cannot set a finite SNR on a zero signal")
    noise = np.zeros_like(X)
    noise[sel] = np.random.default_rng(seed).standard_normal(int(sel.sum()))
    target = signal / 10 ** (snr_db / 10)
    noise *= math.sqrt(target / float(np.sum(noise**2)))
    return X + noise


def observe(M, mask, snr_db: float, seed: int) -> ObservedMatrix:
    """``P_Omega(M + N)`` with the SNR measured on the observed entries."""
    return ObservedMatrix(add_noise(M, snr_db, seed, mask=mask), mask)


def synth_low_rank(spec: SyntheticSpec) -> tuple[np.ndarray, ObservedMatrix]:
    """``M = A B^T`` with standard normal factors, observed through a random mask."""
    r_fac, r_mask, r_noise = _seeds(spec.seed, 3)
    A = r_fac.standard_normal((spec.m, spec.rank))
    B = r_fac.standard_normal((spec.n, spec.rank))
    M = A @ B.T
    mask = random_mask(spec.m, spec.n, spec.obs_fraction, int(r_mask.integers(2**63)))
    data = observe(M, mask, spec.snr_db, int(r_noise.integers(2**63)))
    return M, data


def decaying_matrix(m: int, n: int, decay: float = 0.15, seed: int = 0) -> np.ndarray:
    """Dense matrix with random orthogonal singular vectors and exponentially
    decaying singular values ``exp(-decay * i)``, scaled to peak magnitude 255.

    Stands in for a natural image whose spectrum is not strictly low rank.
    """
    rng = np.random.default_rng(seed)
    k = min(m, n)
    U, _ = np.linalg.qr(rng.standard_normal((m, k)))
    V, _ = np.linalg.qr(rng.standard_normal((n, k)))
    s = np.exp(-decay * np.arange(k))
    X = (U * s) @ V.T
    return X * (255.0 / np.abs(X).max())


def metrics(estimate, truth, peak: float) -> Metrics:
    """RelErr ``||X - M||_F / ||M||_F`` and PSNR ``10 log10(peak^2 mn / ||X - M||_F^2)``."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    if not peak > 0:
        raise ValueError("peak must be positive")
    tnorm = float(np.linalg.norm(truth))
    if tnorm == 0:
        raise ValueError("truth is the zero matrix")
    err2 = float(np.sum((estimate - truth) ** 2))
    if err2 == 0:
        return Metrics(0.0, math.inf)
    psnr = 10 * math.log10(peak**2 * truth.size / err2)
    return Metrics(math.sqrt(err2) / tnorm, psnr)


# -- PGM ------------------------------------------------------------------


def _header_tokens(buf: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte that
    ends the last token.
    """
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(buf) and (buf[i : i + 1].isspace() or buf[i : i + 1] == b"#"):
            if buf[i : i + 1] == b"#":
                while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                    i += 1
            else:
                i += 1
        start = i
        while i < len(buf) and not buf[i : i + 1].isspace() and buf[i : i + 1] != b"#":
            i += 1
        if start == i:
            return tokens, i
        tokens.append(buf[start:i])
    return tokens, i


def parse_pgm(buf: bytes) -> np.ndarray:
    names = ("magic", "width", "height", "maxval")
    tokens, end = _header_tokens(buf, 4)
    if len(tokens) < 1 or tokens[0] != b"P5":
        got = tokens[0][:8] if tokens else b""
        raise PGMFormatError("magic", f"expected b'P5', got {got!r}")
    if len(tokens) < 4:
        raise PGMFormatError(names[len(tokens)], "header is truncated")
    vals = []
    for name, tok in zip(names[1:], tokens[1:]):
        try:
            v = int(tok)
        except ValueError:
            raise PGMFormatError(name, f"not an integer: {tok[:16]!r}") from None
        if v <= 0:
            raise PGMFormatError(name, f"must be positive, got {v}")
        vals.append(v)
    width, height, maxval = vals
    if maxval != 255:
        raise PGMFormatError("maxval", f"only 255 is supported, got {maxval}")
    if end >= len(buf) or not buf[end : end + 1].isspace():
        raise PGMFormatError("maxval", "missing whitespace before pixel data")
    payload = buf[end + 1 :]
    need = width * height
    if len(payload) < need:
        raise PGMFormatError("payload", f"expected {need} bytes, found {len(payload)}")
    pixels = np.frombuffer(payload[:need], dtype=np.uint8)
    return pixels.reshape(height, width).astype(float)


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) 8-bit PGM as a float matrix of shape (height, width)."""
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def write_pgm(X, path) -> None:
    """Write ``X`` as binary PGM, rounding and clamping values to [0, 255]."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    pix = np.clip(np.rint(np.nan_to_num(X)), 0, 255).astype(np.uint8)
    h, w = pix.shape
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
    os.replace(tmp, path)
