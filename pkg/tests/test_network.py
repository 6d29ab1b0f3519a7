"""BN variants, forward-pass mechanics, config parsing."""

import math

import numpy as np
import pytest

from isolab import (
    BN_EPSILON,
    DegenerateRowError,
    GainSchedule,
    NetworkConfig,
    apply_activation,
    bn_simplified,
    bn_standard,
    format_config,
    forward,
    isometry_gap,
    parse_config,
    sample_haar_orthogonal,
    sample_network_weights,
    with_gain,
)
from isolab.rng import derive


def test_bn_simplified_oracle():
    out = bn_simplified(np.array([[3.0, 4.0], [0.0, 5.0]]))
    assert np.allclose(out, [[0.6, 0.8], [0.0, 1.0]], atol=1e-15)


def test_bn_simplified_gram_trace_is_d():
    rng = derive(301)
    for d, n in ((3, 3), (8, 12), (16, 16)):
        b = bn_simplified(rng.standard_normal((d, n)))
        assert abs(np.trace(b @ b.T) - d) < 1e-9


def test_bn_simplified_zero_row():
    x = np.ones((3, 4))
    x[1] = 0.0
    with pytest.raises(DegenerateRowError) as exc:
        bn_simplified(x)
    assert exc.value.row == 1
    assert "zero norm" in str(exc.value)


def test_bn_standard_oracle():
    # row [1, -1]: mean 0, population var 1, scale sqrt(1 + eps)
    out = bn_standard(np.array([[1.0, -1.0]]))
    s = math.sqrt(1.0 + BN_EPSILON)
    assert np.allclose(out, [[1.0 / s, -1.0 / s]], atol=1e-15)
    # a constant row maps to zeros instead of raising
    out = bn_standard(np.array([[5.0, 5.0, 5.0]]))
    assert np.array_equal(out, np.zeros((1, 3)))


def test_bn_standard_row_statistics():
    rng = derive(302)
    x = rng.standard_normal((6, 40)) * 3.0 + 1.0
    out = bn_standard(x)
    assert np.abs(out.mean(axis=1)).max() < 1e-12
    # variance slightly below 1 because of the epsilon in the denominator
    v = out.var(axis=1)
    assert np.all(v < 1.0) and np.all(v > 0.99)


def test_apply_activation():
    x = np.array([[1.0]])
    assert apply_activation(x, "identity", 3.0)[0, 0] == 3.0
    assert abs(apply_activation(x, "tanh", 2.0)[0, 0] - math.tanh(2.0)) < 1e-15
    assert abs(apply_activation(x, "sin", 0.5)[0, 0] - math.sin(0.5)) < 1e-15
    with pytest.raises(ValueError):
        apply_activation(x, "relu", 1.0)
    with pytest.raises(ValueError):
        apply_activation(x, "tanh", 0.0)


def test_gain_schedule():
    g = GainSchedule("constant", alpha=0.7)
    assert g.alpha_at(1) == 0.7 and g.alpha_at(500) == 0.7
    p = GainSchedule("power_law", exponent=1.0)
    assert p.alpha_at(1) == 1.0
    assert abs(p.alpha_at(4) - 0.25) < 1e-15
    with pytest.raises(ValueError):
        p.alpha_at(0)
    with pytest.raises(ValueError):
        GainSchedule("linear")
    with pytest.raises(ValueError):
        GainSchedule("constant", alpha=-1.0)


def test_config_validation():
    for bad in (
        dict(width=1),
        dict(depth=0),
        dict(batch=0),
        dict(init="xavier"),
        dict(activation="relu"),
        dict(bn="layernorm"),
        dict(classes=1),
        dict(classes=20, width=10),
        dict(variance=-1.0),
        dict(seed=-1),
    ):
        with pytest.raises(ValueError):
            NetworkConfig(**bad)


def test_identity_forces_unit_gain():
    cfg = NetworkConfig(activation="identity",
                        gain=GainSchedule("constant", alpha=5.0))
    assert cfg.gain_at(1) == 1.0
    tcfg = NetworkConfig(activation="tanh",
                         gain=GainSchedule("constant", alpha=5.0))
    assert tcfg.gain_at(1) == 5.0


def test_sampled_weights_are_orthogonal():
    cfg = NetworkConfig(width=10, batch=10, depth=4, classes=3, seed=5)
    weights, classifier = sample_network_weights(cfg)
    assert len(weights) == 4
    for w in weights:
        assert np.abs(w @ w.T - np.eye(10)).max() < 1e-10
    assert classifier.shape == (3, 10)
    assert np.abs(classifier @ classifier.T - np.eye(3)).max() < 1e-10


def test_gaussian_init_variance():
    cfg = NetworkConfig(width=64, batch=64, depth=3, init="gaussian", seed=2)
    weights, _ = sample_network_weights(cfg)
    flat = np.concatenate([w.ravel() for w in weights])
    assert abs(flat.var() * 64 - 1.0) < 0.1  # default variance 1/d


def test_forward_identity_weights_fixed_point():
    # Row-normalized input + identity weights: BN(I X) = X at every layer.
    d = 6
    x0 = bn_simplified(derive(303).standard_normal((d, d)))
    cfg = NetworkConfig(width=d, batch=d, depth=5, classes=2)
    tape = forward(cfg, x0, [np.eye(d)] * 5)
    assert np.allclose(tape.xs[-1], x0, atol=1e-12)
    assert tape.depth == 5


def test_forward_transpose_orthogonalizes_in_one_step():
    # With W = U^T for X = U S V^T, the rows of W X are orthogonal, so one
    # normalized layer outputs exactly V^T.
    d = 6
    x0 = derive(304).standard_normal((d, d))
    u, _, vt = np.linalg.svd(x0)
    cfg = NetworkConfig(width=d, batch=d, depth=1, classes=2)
    tape = forward(cfg, x0, [u.T])
    assert np.allclose(tape.xs[-1], vt, atol=1e-10)
    assert isometry_gap(tape.xs[-1]) < 1e-12


def test_forward_monotone_gap_decay():
    # Theory path: identity activation, orthogonal weights, simplified BN.
    for seed in range(5):
        d = 16
        cfg = NetworkConfig(width=d, batch=d, depth=30, seed=seed)
        weights, _ = sample_network_weights(cfg, derive(seed, 0))
        x0 = derive(seed, 2).standard_normal((d, d))
        tape = forward(cfg, x0, weights)
        phis = np.array([isometry_gap(x) for x in tape.xs])
        assert np.all(np.diff(phis) <= 1e-9)
        assert phis[-1] < phis[0]


def test_forward_tanh_plateau_regressions():
    # Constant gain 1 at d = 100, L = 100. The simplified chain stays mildly
    # non-orthogonal; the standard chain plateaus higher. Bands come from
    # measured runs over seeds.
    for bn, lo, hi in (("simplified", 0.2, 0.8), ("standard", 0.6, 1.4)):
        for seed in range(3):
            cfg = NetworkConfig(width=100, batch=100, depth=100,
                                activation="tanh",
                                gain=GainSchedule("constant", 1.0),
                                bn=bn, seed=seed)
            weights, _ = sample_network_weights(cfg, derive(seed, 0))
            x0 = derive(seed, 2).standard_normal((100, 100))
            tape = forward(cfg, x0, weights)
            phi = isometry_gap(tape.xs[-1])
            assert lo < phi < hi, (bn, seed, phi)


def test_forward_degenerate_layer_error():
    d = 4
    cfg = NetworkConfig(width=d, batch=d, depth=2, classes=2)
    x0 = bn_simplified(derive(305).standard_normal((d, d)))
    weights = [np.eye(d), np.eye(d)]
    weights[1] = np.zeros((d, d))  # second layer wipes every row
    with pytest.raises(DegenerateRowError) as exc:
        forward(cfg, x0, weights)
    assert exc.value.layer == 2
    assert "layer 2" in str(exc.value)


def test_forward_shape_errors():
    cfg = NetworkConfig(width=4, batch=4, depth=2, classes=2)
    x0 = np.ones((4, 4))
    with pytest.raises(ValueError, match="weight matrices"):
        forward(cfg, x0, [np.eye(4)])
    with pytest.raises(ValueError, match="4 x 4"):
        forward(cfg, x0, [np.eye(4), np.eye(3)])
    with pytest.raises(ValueError, match="input"):
        forward(cfg, np.ones((3, 4)), [np.eye(4)] * 2)
    with pytest.raises(ValueError, match="classifier"):
        forward(cfg, x0, [np.eye(4)] * 2, classifier=np.ones((3, 4)))


def test_forward_accepts_any_batch_width():
    # evaluation feeds chunks of arbitrary column count
    cfg = NetworkConfig(width=4, batch=7, depth=2, classes=2)
    weights, classifier = sample_network_weights(cfg, derive(306, 0))
    tape = forward(cfg, derive(306, 2).standard_normal((4, 3)), weights,
                   classifier)
    assert tape.logits.shape == (2, 3)


def test_config_round_trip():
    cfgs = [
        NetworkConfig(),
        NetworkConfig(width=32, batch=16, depth=7, init="gaussian",
                      variance=0.5, activation="sin",
                      gain=GainSchedule("power_law", exponent=0.75),
                      bn="standard", classes=5, seed=42),
    ]
    for cfg in cfgs:
        assert parse_config(format_config(cfg)) == cfg


def test_config_parse_errors_and_comments():
    text = "# comment\n\nwidth = 8\nbatch = 8\nclasses=4\n"
    cfg = parse_config(text)
    assert cfg.width == 8 and cfg.batch == 8 and cfg.classes == 4
    with pytest.raises(ValueError, match="unknown key"):
        parse_config("depth = 3\nwormhole = 1\n")
    with pytest.raises(ValueError, match="duplicate key"):
        parse_config("depth = 3\ndepth = 4\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_config("depth 3\n")
    # empty variance means the 1/width default
    assert parse_config("variance =\n").variance is None


def test_with_gain():
    cfg = NetworkConfig(activation="tanh")
    g = GainSchedule("power_law", exponent=0.5)
    assert with_gain(cfg, g).gain == g
    assert cfg.gain.kind == "constant"  # original untouched
