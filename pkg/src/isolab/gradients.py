"""Exact backpropagation through the BN chain, plus loss layers and oracles.

The row-normalizing BN has a closed-form Jacobian per row: with b = h/|h|,

    J(h) = (1/|h|) (I - b b^T),

a rank d-1 projector scaled by 1/|h|. Its spectrum is {1/|h|} with
multiplicity d-1 and one zero, so the operator norm over the whole layer
is max_i 1/|h_i|. Applying J costs O(d) per row; the d^2 x d^2 block
operator is never materialized.

The standard BN row map has the vector-Jacobian product

    g <- (g - mean(g) - b * mean(g * b)) / s,

with b the normalized row and s the stored sqrt(var + eps) denominator;
the epsilon never reappears in the backward pass.

Losses operate on classifier logits. Both supported losses have per-sample
logit gradients of Euclidean norm at most 2, which is what makes
depth-independent gradient bounds possible at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRowError
from .network import LayerTape, bn_simplified, forward
from .spectral import isometry_gap

__all__ = [
    "LossKind",
    "GradientReport",
    "BackwardResult",
    "loss_and_logit_grad",
    "bn_jacobian_apply",
    "bn_jacobian_opnorm",
    "backward",
    "sgd_step",
    "fd_bn_jvp",
    "fd_weight_grad",
]

_LOSS_KINDS = ("cross_entropy_softmax", "mse_on_softmax")


@dataclass(frozen=True)
class LossKind:
    """Loss selector plus integer class labels (one label per sample)."""

    kind: str
    labels: np.ndarray

    def __post_init__(self):
        if self.kind not in _LOSS_KINDS:
            raise ValueError(f"loss kind must be one of {_LOSS_KINDS}, got {self.kind!r}")
        object.__setattr__(
            self, "labels", np.asarray(self.labels, dtype=np.int64).ravel()
        )


def _softmax_columns(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def loss_and_logit_grad(logits, labels, kind: str):
    """Mean loss over the batch and the per-sample logit gradients.

    logits is C x n, one column per sample. The returned gradient matrix
    holds the gradient of each individual sample's loss in its column,
    without the 1/n batch factor, so the per-sample norm bound (<= 2 for
    both losses) can be checked directly. Callers computing gradients of
    the mean loss divide by n themselves.
    """
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("logits must be C x n")
    c, n = z.shape
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape[0] != n:
        raise ValueError(f"need {n} labels, got {labels.shape[0]}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c})")
    if kind not in _LOSS_KINDS:
        raise ValueError(f"loss kind must be one of {_LOSS_KINDS}, got {kind!r}")

    p = _softmax_columns(z)
    cols = np.arange(n)
    if kind == "cross_entropy_softmax":
        picked = np.clip(p[labels, cols], 1e-300, None)
        loss = float(np.mean(-np.log(picked)))
        grad = p.copy()
        grad[labels, cols] -= 1.0
        return loss, grad

    # mean over classes of (y - p)^2, evaluated on softmax outputs
    y = np.zeros_like(p)
    y[labels, cols] = 1.0
    r = p - y
    loss = float(np.mean(np.sum(r * r, axis=0) / c))
    pr = p * r
    grad = (2.0 / c) * (pr - p * pr.sum(axis=0, keepdims=True))
    return loss, grad


def bn_jacobian_apply(h, g) -> np.ndarray:
    """Apply the row-normalization Jacobian at h to the cotangent g, row-wise.

    Row i of the result is (g_i - (b_i . g_i) b_i) / |h_i| with
    b_i = h_i/|h_i|. Because each row block is symmetric, this is both the
    Jacobian-vector and vector-Jacobian product.
    """
    h = np.asarray(h, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if h.shape != g.shape:
        raise ValueError(f"shape mismatch: {h.shape} vs {g.shape}")
    norms = np.sqrt(np.sum(h * h, axis=1))
    bad = np.flatnonzero(norms < np.finfo(np.float64).tiny)
    if bad.size:
        raise DegenerateRowError(int(bad[0]))
    b = h / norms[:, None]
    dots = np.sum(b * g, axis=1)
    return (g - dots[:, None] * b) / norms[:, None]


def bn_jacobian_opnorm(h) -> float:
    """Operator norm of the row-normalization Jacobian: max_i 1/|h_i|.

    +inf sentinel when a row is exactly zero. Satisfies
    opnorm <= 1/sqrt(lambda_min(H H^T)), and for trace-normalized inputs
    log opnorm <= d*phi + 1, tightening to 2*sqrt(d*phi) once
    phi <= 1/(16 d).
    """
    h = np.asarray(h, dtype=np.float64)
    norms = np.sqrt(np.sum(h * h, axis=1))
    m = norms.min()
    if m < np.finfo(np.float64).tiny:
        return math.inf
    return float(1.0 / m)


def _standard_bn_vjp(g, b, scale):
    gm = g.mean(axis=1, keepdims=True)
    bm = (g * b).mean(axis=1, keepdims=True)
    return (g - gm - b * bm) / scale[:, None]


@dataclass
class GradientReport:
    """Per-layer gradient telemetry from one backward pass.

    Arrays indexed by layer 1..L in order: Frobenius norm of the loss
    gradient with respect to W_l, its natural log, the BN Jacobian
    operator norm at that layer (for standard BN the reported value is
    the analogous row-scale bound max_i 1/s_i), and the isometry gap of
    the pre-normalization matrix H_l.
    """

    layers: np.ndarray
    grad_fro: np.ndarray
    log_grad_fro: np.ndarray
    bn_jac_opnorm: np.ndarray
    iso_gap_h: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="ascii", newline="\n") as f:
            f.write("layer,grad_fro,log_grad_fro,bn_jac_opnorm,iso_gap_H\n")
            for i in range(self.layers.shape[0]):
                f.write(
                    f"{int(self.layers[i])},{self.grad_fro[i]:.17g},"
                    f"{self.log_grad_fro[i]:.17g},{self.bn_jac_opnorm[i]:.17g},"
                    f"{self.iso_gap_h[i]:.17g}\n"
                )


@dataclass
class BackwardResult:
    """Gradients of the mean loss for every parameter, plus the report."""

    loss: float
    report: GradientReport
    weight_grads: list
    classifier_grad: np.ndarray


def backward(tape: LayerTape, loss: LossKind) -> BackwardResult:
    """Exact reverse pass over a recorded forward tape.

    Gradients are of the mean loss over the batch. The cotangent enters
    through the classifier, then walks the layers backwards: activation
    derivative (folded gain), BN vector-Jacobian product, then the weight
    gradient G @ X^T and the pull-back W^T G.
    """
    if tape.logits is None or tape.classifier is None:
        raise ValueError("tape has no classifier logits; forward() needs classifier=")
    cfg = tape.config
    n = tape.xs[0].shape[1]
    loss_value, logit_grad = loss_and_logit_grad(tape.logits, loss.labels, loss.kind)
    gs = logit_grad / n
    classifier_grad = gs @ tape.xs[-1].T
    g = tape.classifier.T @ gs

    depth = tape.depth
    weight_grads: list = [None] * depth
    grad_fro = np.empty(depth)
    opnorms = np.empty(depth)
    iso_gaps = np.empty(depth)

    for idx in range(depth - 1, -1, -1):
        b, scale, gain = tape.bs[idx], tape.scales[idx], tape.gains[idx]
        if cfg.activation == "tanh":
            g = g * (gain * (1.0 - tape.xs[idx + 1] ** 2))
        elif cfg.activation == "sin":
            g = g * (gain * np.cos(gain * b))
        elif gain != 1.0:
            g = g * gain

        if cfg.bn == "simplified":
            dots = np.sum(b * g, axis=1)
            g = (g - dots[:, None] * b) / scale[:, None]
            opnorms[idx] = float(1.0 / scale.min())
        else:
            g = _standard_bn_vjp(g, b, scale)
            opnorms[idx] = float(1.0 / scale.min())

        weight_grads[idx] = g @ tape.xs[idx].T
        grad_fro[idx] = float(np.linalg.norm(weight_grads[idx]))
        iso_gaps[idx] = isometry_gap(tape.hs[idx])
        g = tape.weights[idx].T @ g

    with np.errstate(divide="ignore"):
        log_fro = np.log(grad_fro)
    report = GradientReport(
        layers=np.arange(1, depth + 1),
        grad_fro=grad_fro,
        log_grad_fro=log_fro,
        bn_jac_opnorm=opnorms,
        iso_gap_h=iso_gaps,
    )
    return BackwardResult(
        loss=loss_value,
        report=report,
        weight_grads=weight_grads,
        classifier_grad=classifier_grad,
    )


def sgd_step(weights, grads, lr: float):
    """Plain gradient step W <- W - lr * grad on each matrix in the list.

    No re-orthogonalization or other projection; whatever orthogonality
    the weights keep under training is the network's own doing.
    """
    if lr < 0:
        raise ValueError("lr must be >= 0")
    if len(weights) != len(grads):
        raise ValueError("weights and grads must have equal length")
    return [w - lr * g for w, g in zip(weights, grads)]


# --- finite-difference oracles ----------------------------------------------

def fd_bn_jvp(h, g, eps: float = 1e-6) -> np.ndarray:
    """Central-difference directional derivative of bn_simplified at h along g."""
    h = np.asarray(h, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    return (bn_simplified(h + eps * g) - bn_simplified(h - eps * g)) / (2.0 * eps)


def fd_weight_grad(config, x0, weights, classifier, loss: LossKind,
                   layer: int, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the mean loss w.r.t. one weight matrix.

    layer is 1-based. Runs two full forward passes per entry; intended for
    small dimensions only.
    """
    if not (1 <= layer <= config.depth):
        raise ValueError(f"layer must be in [1, {config.depth}]")
    d = config.width
    out = np.empty((d, d))
    ws = [w.copy() for w in weights]
    for i in range(d):
        for j in range(d):
            orig = ws[layer - 1][i, j]
            ws[layer - 1][i, j] = orig + eps
            tape = forward(config, x0, ws, classifier)
            up, _ = loss_and_logit_grad(tape.logits, loss.labels, loss.kind)
            ws[layer - 1][i, j] = orig - eps
            tape = forward(config, x0, ws, classifier)
            down, _ = loss_and_logit_grad(tape.logits, loss.labels, loss.kind)
            ws[layer - 1][i, j] = orig
            out[i, j] = (up - down) / (2.0 * eps)
    return out
