"""Numba-compiled kernels for the sampling-heavy loops.

These mirror _kernels_numpy exactly. Only the per-sample loops are compiled;
random draws happen outside, in numpy, so both backends consume the same
stream and produce the same results. Compiled artifacts are cached on disk,
so the one-time compile cost is paid once per environment.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _orthogonalize(g):
    q, r = np.linalg.qr(g)
    d = r.shape[0]
    for j in range(d):
        s = 1.0 if r[j, j] >= 0.0 else -1.0
        for i in range(d):
            q[i, j] = q[i, j] * s
    return q


@njit(cache=True)
def _haar_stack(gauss):
    m, d, _ = gauss.shape
    out = np.empty_like(gauss)
    for t in range(m):
        out[t] = _orthogonalize(gauss[t].copy())
    return out


@njit(cache=True)
def _moment_values(gauss, i0, j0, i1, j1, degree):
    m = gauss.shape[0]
    out = np.empty(m)
    for t in range(m):
        w = _orthogonalize(gauss[t].copy())
        v = w[i0, j0] ** 2
        if degree == 4:
            v = v * w[i1, j1] ** 2
        out[t] = v
    return out


@njit(cache=True)
def _lift_phi_values(gauss, x, rtol):
    m, d, _ = gauss.shape
    n = x.shape[1]
    out = np.empty(m)
    for t in range(m):
        w = np.ascontiguousarray(_orthogonalize(gauss[t].copy()))
        y = w @ x
        for i in range(d):
            nrm = 0.0
            for j in range(n):
                nrm += y[i, j] * y[i, j]
            nrm = np.sqrt(nrm)
            for j in range(n):
                y[i, j] = y[i, j] / nrm
        sv = np.linalg.svd(y)[1]
        if sv[0] == 0.0 or sv[-1] < rtol * sv[0]:
            out[t] = np.inf
        else:
            mean_lam = 0.0
            mean_log = 0.0
            for i in range(d):
                lam = sv[i] * sv[i]
                mean_lam += lam
                mean_log += np.log(lam)
            out[t] = np.log(mean_lam / d) - mean_log / d
    return out


@njit(cache=True)
def _rank_cos_values(stack, rtol):
    t_count, f, n = stack.shape
    out = np.empty((t_count, 2))
    for t in range(t_count):
        mat = stack[t].copy()
        sv = np.linalg.svd(mat)[1]
        rank = 0
        if sv[0] > 0.0:
            for v in sv:
                if v > rtol * sv[0]:
                    rank += 1
        unit = mat
        for j in range(n):
            nrm = 0.0
            for i in range(f):
                nrm += mat[i, j] * mat[i, j]
            nrm = np.sqrt(nrm)
            if nrm == 0.0:
                nrm = 1.0
            for i in range(f):
                unit[i, j] = mat[i, j] / nrm
        gram = unit.T @ unit
        total = 0.0
        for a in range(n):
            for b in range(n):
                if a != b:
                    total += gram[a, b]
        out[t, 0] = float(rank)
        out[t, 1] = total / (n * (n - 1)) if n > 1 else 1.0
    return out


def haar_stack(gauss: np.ndarray) -> np.ndarray:
    return _haar_stack(np.ascontiguousarray(gauss))


def moment_values(gauss: np.ndarray, i0: int, j0: int, i1: int, j1: int,
                  degree: int) -> np.ndarray:
    return _moment_values(np.ascontiguousarray(gauss), i0, j0, i1, j1, degree)


def lift_phi_values(gauss: np.ndarray, x: np.ndarray, rtol: float) -> np.ndarray:
    return _lift_phi_values(np.ascontiguousarray(gauss),
                            np.ascontiguousarray(x), rtol)


def rank_cos_values(stack: np.ndarray, rtol: float) -> np.ndarray:
    return _rank_cos_values(np.ascontiguousarray(stack), rtol)
