"""Pure-numpy reference kernels.

Same call surface as the numba variants; used when numba is unavailable or
when ISOLAB_BACKEND=numpy. Both variants consume pregenerated Gaussian
blocks, so the random stream is identical regardless of which one runs.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def haar_stack(gauss: np.ndarray) -> np.ndarray:
    """Orthogonalize a (m, d, d) stack of Gaussian draws.

    QR with the column sign fix: multiply column j of Q by sign(R[j, j]),
    treating sign(0) as +1. Plain QR is biased; the sign fix makes the
    output Haar-distributed.
    """
    m = gauss.shape[0]
    out = np.empty_like(gauss)
    for t in range(m):
        q, r = np.linalg.qr(gauss[t])
        s = np.sign(np.diag(r))
        s[s == 0.0] = 1.0
        out[t] = q * s
    return out


def moment_values(gauss: np.ndarray, i0: int, j0: int, i1: int, j1: int,
                  degree: int) -> np.ndarray:
    """Per-sample monomial values W[i0,j0]^2 (* W[i1,j1]^2 for degree 4)."""
    w = haar_stack(gauss)
    v = w[:, i0, j0] ** 2
    if degree == 4:
        v = v * w[:, i1, j1] ** 2
    return v


def lift_phi_values(gauss: np.ndarray, x: np.ndarray, rtol: float) -> np.ndarray:
    """Isometry gap of row-normalized W @ x for each Haar W in the stack."""
    m = gauss.shape[0]
    out = np.empty(m)
    for t in range(m):
        q, r = np.linalg.qr(gauss[t])
        s = np.sign(np.diag(r))
        s[s == 0.0] = 1.0
        y = (q * s) @ x
        y = y / np.sqrt(np.sum(y * y, axis=1))[:, None]
        sv = np.linalg.svd(y, compute_uv=False)
        if sv[0] == 0.0 or sv[-1] < rtol * sv[0]:
            out[t] = np.inf
        else:
            lam = sv * sv
            out[t] = np.log(lam.mean()) - np.mean(np.log(lam))
    return out


def rank_cos_values(stack: np.ndarray, rtol: float) -> np.ndarray:
    """Numerical rank and mean pairwise column cosine for each (f, n) slice.

    Returns (t, 2): column 0 rank, column 1 mean cosine over distinct pairs.
    """
    t_count, _, n = stack.shape
    out = np.empty((t_count, 2))
    for t in range(t_count):
        mat = stack[t]
        sv = np.linalg.svd(mat, compute_uv=False)
        rank = 0 if sv[0] == 0.0 else int(np.sum(sv > rtol * sv[0]))
        norms = np.sqrt(np.sum(mat * mat, axis=0))
        norms = np.where(norms == 0.0, 1.0, norms)
        unit = mat / norms
        gram = unit.T @ unit
        total = np.sum(gram) - np.trace(gram)
        out[t, 0] = float(rank)
        out[t, 1] = total / (n * (n - 1)) if n > 1 else 1.0
    return out
