"""Gradient explosion rate measurement and gain-schedule fitting.

Nonlinear BN chains at constant gain blow their gradients up at a constant
per-layer rate. The rate at layer l is the slope of the per-layer gradient
log-norm across a fixed 10-layer gap,

    R(l, alpha) = (log |grad W_{l-10}| - log |grad W_l|) / 10,

oriented so that explosion (gradient norms growing toward the input) is
positive. Across gains the measured rate follows a power law
R = c1 * alpha^{c2}; fitting (c1, c2) and choosing a decay target k > 1
gives the layer-indexed gain schedule alpha_l = l^(-k/c2), whose predicted
cumulative log-growth c1 * sum l^(-k) stays bounded for any depth.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .gradients import LossKind, backward
from .network import GainSchedule, NetworkConfig, forward, sample_network_weights
from .rng import derive

__all__ = [
    "RATE_GAP",
    "RateMeasurement",
    "RateFit",
    "measure_rate_single",
    "measure_rate",
    "fit_power_law",
    "gain_schedule_from_fit",
    "cumulative_rate",
    "cumulative_rate_bound",
]

# The gap is part of the rate's definition, not a tunable: every published
# number using R assumes the same 10 layers.
RATE_GAP = 10

# Stream tags for the per-seed derivations below.
_S_WEIGHTS, _S_DATA, _S_LABELS = 0, 1, 2


@dataclass(frozen=True)
class RateMeasurement:
    """One (layer, gain) rate estimate, averaged over seeds."""

    layer: int
    alpha: float
    rate: float
    depth: int
    activation: str
    seed: int
    n_seeds: int = 1


@dataclass(frozen=True)
class RateFit:
    """Power-law fit R = c1 * alpha^{c2} in log-log space."""

    c1: float
    c2: float
    residual: float
    n_points: int
    alpha_min: float
    alpha_max: float


def measure_rate_single(config: NetworkConfig, layer: int, alpha: float,
                        seed: int) -> float:
    """Rate at one seed: fresh weights, Gaussian input, random labels.

    The network runs at constant gain alpha (identity activations always
    run at gain 1, so their measured rate is just the noise floor).
    """
    if layer < RATE_GAP + 1:
        raise ValueError(f"layer must be >= {RATE_GAP + 1} so the gap exists")
    if config.depth < layer:
        raise ValueError(f"config.depth must be >= {layer}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")

    cfg = replace(config, gain=GainSchedule("constant", alpha), seed=seed)
    weights, classifier = sample_network_weights(
        cfg, derive(seed, _S_WEIGHTS)
    )
    x0 = derive(seed, _S_DATA).standard_normal((cfg.width, cfg.batch))
    labels = derive(seed, _S_LABELS).integers(0, cfg.classes, cfg.batch)
    tape = forward(cfg, x0, weights, classifier)
    result = backward(tape, LossKind("cross_entropy_softmax", labels))
    logs = result.report.log_grad_fro
    return float((logs[layer - RATE_GAP - 1] - logs[layer - 1]) / RATE_GAP)


def measure_rate(config: NetworkConfig, layer: int, alpha: float,
                 seeds: int) -> RateMeasurement:
    """Mean rate over `seeds` independent networks at initialization.

    Seeds are derived from config.seed, one network per seed; nothing is
    trained. Returns the averaged measurement.
    """
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    rates = [
        measure_rate_single(config, layer, alpha, _seed_for(config.seed, s))
        for s in range(seeds)
    ]
    return RateMeasurement(
        layer=layer, alpha=alpha, rate=float(np.mean(rates)),
        depth=config.depth, activation=config.activation,
        seed=config.seed, n_seeds=seeds,
    )


def _seed_for(root: int, index: int) -> int:
    # Fold (root, index) into one int so per-seed streams stay disjoint.
    return int(derive(root, 9, index).integers(0, 2**63 - 1))


def fit_power_law(measurements) -> RateFit:
    """Ordinary least squares of log R against log alpha.

    Nonpositive rates carry no log-domain information and are dropped; at
    least 5 distinct alpha values must survive. Returns the multiplier c1,
    exponent c2, and the RMS residual in log-log space.
    """
    kept = [(m.alpha, m.rate) for m in measurements if m.rate > 0]
    alphas = sorted({a for a, _ in kept})
    if len(alphas) < 5:
        raise ValueError(
            f"power-law fit needs >= 5 distinct alpha values with positive "
            f"rate, got {len(alphas)}"
        )
    x = np.log([a for a, _ in kept])
    y = np.log([r for _, r in kept])
    c2, logc1 = np.polyfit(x, y, 1)
    yhat = c2 * x + logc1
    residual = float(np.sqrt(np.mean((y - yhat) ** 2)))
    return RateFit(
        c1=float(np.exp(logc1)), c2=float(c2), residual=residual,
        n_points=len(kept), alpha_min=float(alphas[0]), alpha_max=float(alphas[-1]),
    )


def gain_schedule_from_fit(fit: RateFit, k: float, depth: int) -> GainSchedule:
    """Schedule alpha_l = l^(-k/c2) from a fitted rate law.

    Requires c2 > 0 (a nonpositive exponent means the rate law gives no
    handle on the gain) and k > 1 (the cumulative rate sum must converge).
    depth is validated against the schedule but not stored; schedules are
    depth-independent.
    """
    if fit.c2 <= 0:
        raise ValueError("fitted c2 must be positive to shape gains")
    if k <= 1:
        raise ValueError("k must be > 1 so the cumulative rate converges")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    schedule = GainSchedule("power_law", exponent=k / fit.c2)
    # Sanity: gains must stay strictly positive over the target depth.
    if schedule.alpha_at(depth) <= 0:
        raise ValueError("schedule degenerated to zero gain")
    return schedule


def cumulative_rate(c1: float, k: float, depth: int) -> float:
    """Predicted total log-growth c1 * sum_{l=1..depth} l^(-k)."""
    ls = np.arange(1, depth + 1, dtype=np.float64)
    return float(c1 * np.sum(ls ** (-k)))


def cumulative_rate_bound(c1: float, k: float) -> float:
    """Depth-free bound c1 * (1 + 1/(k-1)) on the cumulative rate.

    Integral comparison: sum_{l>=1} l^(-k) <= 1 + integral_1^inf t^(-k) dt.
    """
    if k <= 1:
        raise ValueError("bound requires k > 1")
    return c1 * (1.0 + 1.0 / (k - 1.0))
