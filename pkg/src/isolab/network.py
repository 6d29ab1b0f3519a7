"""Network construction and the forward pass.

A network is a chain of L layers

    X_{l+1} = sigma(alpha_l * BN(W_l X_l)),    l = 1..L,

with square d x d weights, followed by an optional C x d classifier with
orthonormal rows that produces logits without normalization. Two BN
variants exist:

  simplified  row i divided by its Euclidean norm; no epsilon, a zero row
              is an error. This is the variant the isometry analysis is
              about: the output Gram matrix has trace exactly d.
  standard    per-row mean subtraction, then division by the root of the
              population variance plus 1e-5. Used for training-style runs
              and for the nonlinear gradient-explosion measurements.

The forward pass records every intermediate (a LayerTape), which buys
exact backpropagation without recomputation. At desk scale (d <= 128,
L <= 1000) the tape is tens of megabytes.
"""

from __future__ import annotations

import io as _stdio
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateRowError
from .rng import as_generator, derive
from .spectral import sample_haar_orthogonal

__all__ = [
    "GainSchedule",
    "NetworkConfig",
    "LayerTape",
    "bn_simplified",
    "bn_standard",
    "apply_activation",
    "sample_network_weights",
    "forward",
    "format_config",
    "parse_config",
    "with_gain",
    "BN_EPSILON",
]

BN_EPSILON = 1e-5

_ACTIVATIONS = ("identity", "tanh", "sin")
_INITS = ("haar", "gaussian")
_BN_VARIANTS = ("simplified", "standard")
_GAIN_KINDS = ("constant", "power_law")


@dataclass(frozen=True)
class GainSchedule:
    """Per-layer pre-activation gain alpha_l.

    kind "constant": alpha_l = alpha for every layer.
    kind "power_law": alpha_l = l ** (-exponent), layers counted from 1 so
    the power is always defined.
    """

    kind: str = "constant"
    alpha: float = 1.0
    exponent: float = 0.0

    def __post_init__(self):
        if self.kind not in _GAIN_KINDS:
            raise ValueError(f"gain kind must be one of {_GAIN_KINDS}, got {self.kind!r}")
        if self.kind == "constant" and self.alpha <= 0:
            raise ValueError("constant gain must be positive")

    def alpha_at(self, layer: int) -> float:
        """Gain at 1-based layer index."""
        if layer < 1:
            raise ValueError("layer index starts at 1")
        if self.kind == "constant":
            return self.alpha
        return float(layer) ** (-self.exponent)


@dataclass(frozen=True)
class NetworkConfig:
    """Shape and sampling recipe for one network.

    Theory claims about the simplified BN chain assume batch == width;
    the constructor does not force that (training-style runs use other
    batch sizes), but the decay experiments check it explicitly.
    """

    width: int = 100
    batch: int = 100
    depth: int = 100
    init: str = "haar"
    variance: float | None = None
    activation: str = "identity"
    gain: GainSchedule = field(default_factory=GainSchedule)
    bn: str = "simplified"
    classes: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.width < 2:
            raise ValueError("width must be >= 2")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.init not in _INITS:
            raise ValueError(f"init must be one of {_INITS}, got {self.init!r}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(
                f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}"
            )
        if self.bn not in _BN_VARIANTS:
            raise ValueError(f"bn must be one of {_BN_VARIANTS}, got {self.bn!r}")
        if not (2 <= self.classes <= self.width):
            raise ValueError("classes must satisfy 2 <= classes <= width")
        if self.variance is not None and self.variance <= 0:
            raise ValueError("variance must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def gain_at(self, layer: int) -> float:
        """Effective gain: the identity activation always runs at gain 1."""
        if self.activation == "identity":
            return 1.0
        return self.gain.alpha_at(layer)


def bn_simplified(x) -> np.ndarray:
    """Divide each row by its Euclidean norm.

    The output Gram matrix has unit diagonal, hence trace exactly d. A row
    of zero norm raises DegenerateRowError; this variant deliberately has
    no epsilon.
    """
    x = np.asarray(x, dtype=np.float64)
    norms = np.sqrt(np.sum(x * x, axis=1))
    bad = np.flatnonzero(norms < np.finfo(np.float64).tiny)
    if bad.size:
        raise DegenerateRowError(int(bad[0]))
    return x / norms[:, None]


def bn_standard(x) -> np.ndarray:
    """Per-row standardization with the usual epsilon guard.

    Subtracts the row mean and divides by sqrt(population variance + eps),
    eps = 1e-5. No learned affine parameters. A constant row comes out as
    zeros rather than an error.
    """
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=1, keepdims=True)
    centered = x - mu
    scale = np.sqrt(np.mean(centered * centered, axis=1) + BN_EPSILON)
    return centered / scale[:, None]


def apply_activation(x, kind: str, gain: float) -> np.ndarray:
    """Elementwise sigma(gain * x) for sigma in {identity, tanh, sin}."""
    if kind not in _ACTIVATIONS:
        raise ValueError(f"unknown activation {kind!r}")
    if gain <= 0:
        raise ValueError("gain must be positive")
    x = np.asarray(x, dtype=np.float64)
    if kind == "identity":
        return gain * x
    if kind == "tanh":
        return np.tanh(gain * x)
    return np.sin(gain * x)


def sample_network_weights(config: NetworkConfig, rng=None):
    """Draw the layer weights and the classifier for a config.

    Returns (weights, classifier): weights is a list of depth d x d
    matrices, classifier is C x d with orthonormal rows (the first C rows
    of an orthogonal matrix). Haar init draws orthogonal weights; gaussian
    init draws i.i.d. entries with the configured variance (default 1/d).
    """
    rng = as_generator(rng if rng is not None else derive(config.seed, 0))
    d = config.width
    var = config.variance if config.variance is not None else 1.0 / d
    weights = []
    for _ in range(config.depth):
        if config.init == "haar":
            weights.append(sample_haar_orthogonal(d, rng))
        else:
            weights.append(rng.standard_normal((d, d)) * math.sqrt(var))
    classifier = sample_haar_orthogonal(d, rng)[: config.classes, :].copy()
    return weights, classifier


@dataclass
class LayerTape:
    """Everything the forward pass saw, in layer order.

    xs:     L+1 entries, xs[0] the input and xs[l] the layer-l output
    hs:     L pre-normalization products W_l @ xs[l-1]
    bs:     L post-BN matrices
    scales: L per-row scale vectors (row norms for simplified BN, the
            sqrt(var + eps) denominators for standard BN)
    gains:  L effective gains actually applied
    weights: the L weight matrices (references, not copies)
    classifier, logits: present when a classifier was supplied
    """

    config: NetworkConfig
    xs: list
    hs: list
    bs: list
    scales: list
    gains: list
    weights: list
    classifier: np.ndarray | None = None
    logits: np.ndarray | None = None

    @property
    def depth(self) -> int:
        return len(self.hs)


def forward(config: NetworkConfig, x0, weights, classifier=None) -> LayerTape:
    """Run the chain and record all intermediates.

    weights must hold exactly config.depth matrices, each width x width;
    x0 is width x batch. A zero row inside the simplified BN aborts with
    the 1-based layer index attached.
    """
    x = np.asarray(x0, dtype=np.float64)
    d = config.width
    if x.ndim != 2 or x.shape[0] != d or x.shape[1] < 1:
        raise ValueError(
            f"input must be {d} x n with n >= 1, got shape {x.shape}"
        )
    if len(weights) != config.depth:
        raise ValueError(
            f"need exactly {config.depth} weight matrices, got {len(weights)}"
        )
    for i, w in enumerate(weights):
        if w.shape != (d, d):
            raise ValueError(f"weight {i + 1} must be {d} x {d}, got {w.shape}")

    xs = [x]
    hs, bs, scales, gains = [], [], [], []
    for layer in range(1, config.depth + 1):
        h = weights[layer - 1] @ x
        if config.bn == "simplified":
            norms = np.sqrt(np.sum(h * h, axis=1))
            bad = np.flatnonzero(norms < np.finfo(np.float64).tiny)
            if bad.size:
                raise DegenerateRowError(int(bad[0]), layer=layer)
            b = h / norms[:, None]
            scale = norms
        else:
            mu = h.mean(axis=1, keepdims=True)
            centered = h - mu
            scale = np.sqrt(np.mean(centered * centered, axis=1) + BN_EPSILON)
            b = centered / scale[:, None]
        g = config.gain_at(layer)
        x = apply_activation(b, config.activation, g)
        hs.append(h)
        bs.append(b)
        scales.append(scale)
        gains.append(g)
        xs.append(x)

    tape = LayerTape(
        config=config, xs=xs, hs=hs, bs=bs, scales=scales, gains=gains,
        weights=list(weights),
    )
    if classifier is not None:
        classifier = np.asarray(classifier, dtype=np.float64)
        if classifier.shape != (config.classes, d):
            raise ValueError(
                f"classifier must be {config.classes} x {d}, got {classifier.shape}"
            )
        tape.classifier = classifier
        tape.logits = classifier @ x
    return tape


# --- flat key = value config files -----------------------------------------

_CONFIG_KEYS = (
    "width", "batch", "depth", "init", "variance", "activation",
    "gain_kind", "gain_alpha", "gain_exponent", "bn", "classes", "seed",
)


def format_config(config: NetworkConfig) -> str:
    """Render a config as one key = value pair per line."""
    lines = [
        f"width = {config.width}",
        f"batch = {config.batch}",
        f"depth = {config.depth}",
        f"init = {config.init}",
        f"variance = {'' if config.variance is None else repr(config.variance)}",
        f"activation = {config.activation}",
        f"gain_kind = {config.gain.kind}",
        f"gain_alpha = {config.gain.alpha!r}",
        f"gain_exponent = {config.gain.exponent!r}",
        f"bn = {config.bn}",
        f"classes = {config.classes}",
        f"seed = {config.seed}",
    ]
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> NetworkConfig:
    """Parse the flat key = value format. Unknown keys are errors.

    Omitted keys keep their defaults; an empty variance means "default
    1/width". Lines starting with '#' and blank lines are ignored.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(_stdio.StringIO(text), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {line!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = val.strip()

    defaults = NetworkConfig()

    def _int(key, fallback):
        return int(values[key]) if key in values else fallback

    def _float(key, fallback):
        return float(values[key]) if key in values else fallback

    variance: float | None
    if "variance" in values and values["variance"] != "":
        variance = float(values["variance"])
    else:
        variance = None

    gain = GainSchedule(
        kind=values.get("gain_kind", defaults.gain.kind),
        alpha=_float("gain_alpha", defaults.gain.alpha),
        exponent=_float("gain_exponent", defaults.gain.exponent),
    )
    return NetworkConfig(
        width=_int("width", defaults.width),
        batch=_int("batch", defaults.batch),
        depth=_int("depth", defaults.depth),
        init=values.get("init", defaults.init),
        variance=variance,
        activation=values.get("activation", defaults.activation),
        gain=gain,
        bn=values.get("bn", defaults.bn),
        classes=_int("classes", defaults.classes),
        seed=_int("seed", defaults.seed),
    )


def with_gain(config: NetworkConfig, gain: GainSchedule) -> NetworkConfig:
    """Copy of config with a different gain schedule."""
    return replace(config, gain=gain)
