"""Kernel backend selection.

The sampling-heavy inner loops (Haar orthogonalization stacks, moment
accumulation, rank audits) exist twice: compiled with numba and in pure
numpy. The environment variable ISOLAB_BACKEND picks one:

    auto   (default) use numba if importable, else numpy
    numba  require numba, error if missing
    numpy  force the pure-numpy path

Matrix-chain work (forward/backward passes) is BLAS-bound and stays in
numpy under every backend; compiling it buys nothing and was measured
slower. Selection is evaluated per call, so tests can flip the variable
at runtime.
"""

from __future__ import annotations

import os
from importlib import import_module

__all__ = ["active_backend", "kernels", "BACKEND_ENV"]

BACKEND_ENV = "ISOLAB_BACKEND"

_modules: dict[str, object] = {}


def _load(name: str):
    if name not in _modules:
        _modules[name] = import_module(
            "isolab._kernels_numba" if name == "numba" else "isolab._kernels_numpy"
        )
    return _modules[name]


def active_backend() -> str:
    """Resolve the backend name the next kernel call will use."""
    flag = os.environ.get(BACKEND_ENV, "auto").strip().lower()
    if flag not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"{BACKEND_ENV} must be one of auto/numba/numpy, got {flag!r}"
        )
    if flag == "numpy":
        return "numpy"
    if flag == "numba":
        _load("numba")
        return "numba"
    try:
        _load("numba")
        return "numba"
    except ImportError:
        return "numpy"


def kernels():
    """Return the kernel module for the currently selected backend."""
    return _load(active_backend())
