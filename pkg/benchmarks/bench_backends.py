"""Time the sampling kernels under the numba and numpy backends.

Covers the four kernel entry points (Haar stacks, moment accumulation,
lift gaps, rank audits) plus one deep forward pass for context. The
forward pass is BLAS-bound matrix-chain work and runs through numpy under
both backends, so its row is expected to read ~1.0x; it is included to
show where compilation does and does not pay.

Usage:
    python benchmarks/bench_backends.py [--repeats 5] [--scale 1.0]

The numba column includes a discarded warmup call so JIT compilation is
not billed to the timing.
"""

import argparse
import os
import time

import numpy as np

from isolab.backend import BACKEND_ENV, kernels
from isolab.network import NetworkConfig, forward, sample_network_weights
from isolab.rng import derive


def _time_best(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _workloads(scale):
    rng = derive(4242)
    m_haar = int(2000 * scale)
    m_mom = int(20000 * scale)
    m_lift = int(2000 * scale)
    t_rank = int(64 * scale)

    g_haar = rng.standard_normal((m_haar, 16, 16))
    g_mom = rng.standard_normal((m_mom, 8, 8))
    g_lift = rng.standard_normal((m_lift, 16, 16))
    x = rng.standard_normal((16, 16))
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    stack = rng.standard_normal((t_rank, 128, 64))

    cfg = NetworkConfig(width=64, batch=64, depth=200, seed=0)
    weights, classifier = sample_network_weights(cfg, derive(4242, 0))
    x0 = rng.standard_normal((64, 64))

    return {
        f"haar_stack ({m_haar} x 16 x 16)":
            lambda: kernels().haar_stack(g_haar),
        f"moment_values ({m_mom} quartic d=8)":
            lambda: kernels().moment_values(g_mom, 0, 0, 1, 1, 4),
        f"lift_phi_values ({m_lift} x d=16)":
            lambda: kernels().lift_phi_values(g_lift, x, 1e-12),
        f"rank_cos_values ({t_rank} x 128 x 64)":
            lambda: kernels().rank_cos_values(stack, 1e-12),
        "forward chain (d=64, 200 layers)":
            lambda: forward(cfg, x0, weights, classifier),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="timed repetitions per cell; best is reported")
    ap.add_argument("--scale", type=float, default=1.0,
                    help="multiplier on the workload sizes")
    args = ap.parse_args(argv)

    os.environ[BACKEND_ENV] = "numba"
    try:
        kernels()
    except ImportError:
        print("numba is not importable; install it or compare against "
              "ISOLAB_BACKEND=numpy only")
        os.environ[BACKEND_ENV] = "auto"
        return 1

    results = {}
    for backend in ("numpy", "numba"):
        os.environ[BACKEND_ENV] = backend
        work = _workloads(args.scale)
        for name, fn in work.items():
            fn()  # warmup; compiles on the numba pass
            results.setdefault(name, {})[backend] = _time_best(fn, args.repeats)
    os.environ[BACKEND_ENV] = "auto"

    width = max(len(n) for n in results)
    print(f"{'workload':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}")
    for name, cells in results.items():
        ratio = cells["numpy"] / cells["numba"]
        print(f"{name:<{width}}  {cells['numpy'] * 1e3:>8.1f}ms  "
              f"{cells['numba'] * 1e3:>8.1f}ms  {ratio:>7.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
