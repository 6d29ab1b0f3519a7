"""Isometry gap, spectral summaries, and random matrix sampling.

The central quantity is the isometry gap

    phi(X) = log(mean of lambda) - mean of log(lambda),

where lambda are the eigenvalues of X X^T (squared singular values of X).
phi is zero exactly when all eigenvalues coincide, i.e. when the rows of X
form a scaled orthogonal system, and +inf when X is rank-deficient. The
companion score I(X) = exp(-phi(X)) lives in (0, 1], hitting 1 for
orthogonal X and 0 for degenerate X.

Everything is computed from singular values in the log domain; explicit
determinants of Gram matrices overflow f64 long before d = 100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .rng import as_generator

__all__ = [
    "RANK_RTOL",
    "SpectralSummary",
    "isometry_gap",
    "isometry",
    "spectral_summary",
    "sample_haar_orthogonal",
    "sample_haar_stack",
    "sample_gaussian",
]

# Singular values below this fraction of the largest are treated as zero.
RANK_RTOL = 1e-12


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {x.shape}")
    return x


def isometry_gap(x) -> float:
    """Return phi(X), or +inf when X is numerically rank-deficient.

    X must be d x n with d <= n so the Gram matrix X X^T can be full rank.
    The zero matrix maps to +inf, never NaN.
    """
    x = _as_matrix(x)
    d, n = x.shape
    if d > n:
        raise ValueError(f"need d <= n, got {d} x {n}")
    sv = np.linalg.svd(x, compute_uv=False)
    # compare as a ratio: RANK_RTOL * sv[0] underflows for subnormal sv[0]
    if sv[0] == 0.0 or sv[-1] / sv[0] < RANK_RTOL:
        return math.inf
    # phi is scale invariant; normalizing prevents sigma^2 under/overflow
    lam = (sv / sv[0]) ** 2
    return float(np.log(lam.mean()) - np.mean(np.log(lam)))


def isometry(x) -> float:
    """Return I(X) = exp(-phi(X)); 0 for degenerate X."""
    gap = isometry_gap(x)
    return 0.0 if math.isinf(gap) else math.exp(-gap)


@dataclass(frozen=True)
class SpectralSummary:
    """Eigenvalue view of a square matrix's Gram spectrum.

    eigenvalues: descending eigenvalues of X X^T
    trace:       their sum
    log_det:     sum of their logs, -inf when rank-deficient
    iso_gap:     phi(X)
    lambda_min:  smallest eigenvalue
    """

    eigenvalues: np.ndarray
    trace: float
    log_det: float
    iso_gap: float
    lambda_min: float


def spectral_summary(x) -> SpectralSummary:
    """Summarize the Gram spectrum of a square matrix."""
    x = _as_matrix(x)
    d, n = x.shape
    if d != n:
        raise ValueError(f"spectral_summary needs a square matrix, got {d} x {n}")
    sv = np.linalg.svd(x, compute_uv=False)
    lam = sv * sv
    degenerate = sv[0] == 0.0 or sv[-1] / sv[0] < RANK_RTOL
    if degenerate:
        log_det = -math.inf
        gap = math.inf
    else:
        log_det = float(np.sum(np.log(lam)))
        norm = (sv / sv[0]) ** 2
        gap = float(np.log(norm.mean()) - np.mean(np.log(norm)))
    return SpectralSummary(
        eigenvalues=lam,
        trace=float(lam.sum()),
        log_det=log_det,
        iso_gap=gap,
        lambda_min=float(lam[-1]),
    )


def sample_haar_orthogonal(d: int, rng) -> np.ndarray:
    """Draw one d x d orthogonal matrix from the rotation-invariant law.

    QR of a Gaussian matrix, with each column of Q multiplied by the sign
    of the matching diagonal entry of R (sign(0) taken as +1). Without the
    sign fix the QR output is not rotation invariant.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = as_generator(rng)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    s = np.sign(np.diag(r))
    s[s == 0.0] = 1.0
    return q * s


def sample_haar_stack(d: int, count: int, rng) -> np.ndarray:
    """Draw a (count, d, d) stack of independent orthogonal matrices.

    Gaussian draws come from the caller's generator; the orthogonalization
    loop runs on the selected kernel backend.
    """
    if d < 1 or count < 1:
        raise ValueError("d and count must be >= 1")
    rng = as_generator(rng)
    return kernels().haar_stack(rng.standard_normal((count, d, d)))


def sample_gaussian(d: int, variance: float | None = None, rng=None) -> np.ndarray:
    """Draw a d x d matrix of i.i.d. zero-mean Gaussians.

    Default variance is 1/d, the scaling that keeps products W X of
    constant typical magnitude across widths.
    """
    if variance is None:
        variance = 1.0 / d
    if variance <= 0:
        raise ValueError("variance must be positive")
    rng = as_generator(rng if rng is not None else 0)
    return rng.standard_normal((d, d)) * math.sqrt(variance)
