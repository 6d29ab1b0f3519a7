"""Experiment runners: file emission, determinism, small-scale behavior."""

import json
import math

import numpy as np
import pytest

from isolab import (
    ExperimentSpec,
    GainSchedule,
    NetworkConfig,
    emit_plot_data,
    load_matrix_csv,
    make_cluster_batch,
    run_gradient_sweep,
    run_isometry_decay,
    run_rank_audit,
    run_shaping_suite,
    run_training,
    run_weingarten_verify,
    write_sidecar,
)
from isolab.rng import derive


def test_emit_plot_data_two_columns(tmp_path):
    p = tmp_path / "s.dat"
    emit_plot_data({"x": [1.0, 2.0], "y": [0.5, 0.25]}, p)
    assert p.read_text() == "1 0.5\n2 0.25\n"


def test_emit_plot_data_with_band(tmp_path):
    p = tmp_path / "s.dat"
    emit_plot_data({"x": [1.0], "y": [2.0], "y_lo": [1.5], "y_hi": [2.5]}, p)
    assert p.read_text() == "1 2 1.5 2.5\n"


def test_emit_plot_data_errors(tmp_path):
    p = tmp_path / "s.dat"
    with pytest.raises(ValueError, match="empty series"):
        emit_plot_data({"x": [], "y": []}, p)
    with pytest.raises(ValueError, match="equal length"):
        emit_plot_data({"x": [1.0], "y": [1.0, 2.0]}, p)
    with pytest.raises(ValueError, match="band"):
        emit_plot_data({"x": [1.0], "y": [1.0], "y_lo": [0.5]}, p)


def test_sidecar_round_trip(tmp_path):
    spec = ExperimentSpec(kind="isometry",
                          config=NetworkConfig(width=8, batch=8, classes=4, seed=3),
                          depths=(30,), out_dir=str(tmp_path))
    path = write_sidecar(spec, "spec.json")
    payload = json.loads(open(path).read())
    assert payload["kind"] == "isometry"
    assert payload["config"]["width"] == 8
    assert payload["config"]["seed"] == 3
    assert payload["config"]["gain"] == {"kind": "constant", "alpha": 1.0,
                                         "exponent": 0.0}


def test_cal_constant_paths(monkeypatch):
    spec = ExperimentSpec(kind="isometry", c_cal=0.002)
    assert spec.cal_constant() == 0.002
    import isolab.calibration as calibration
    monkeypatch.setattr(calibration, "C_CAL", float("nan"))
    bare = ExperimentSpec(kind="isometry")
    with pytest.raises(ValueError, match="calibration"):
        bare.cal_constant()


def test_make_cluster_batch():
    b = make_cluster_batch(16, 50, 4, derive(801))
    assert b.data.shape == (16, 50)
    assert b.labels.min() >= 0 and b.labels.max() < 4
    c = make_cluster_batch(16, 50, 4, derive(801))
    assert np.array_equal(b.data, c.data)
    with pytest.raises(ValueError, match="classes"):
        make_cluster_batch(3, 10, 4, derive(802))


def _decay_spec(out, seed=0, seeds=3):
    cfg = NetworkConfig(width=8, batch=8, depth=30, classes=4, seed=seed)
    return ExperimentSpec(kind="isometry", config=cfg, widths=(8,),
                          depths=(30,), n_seeds=seeds, out_dir=str(out))


def test_isometry_decay_outputs(tmp_path):
    res = run_isometry_decay(_decay_spec(tmp_path))
    r = res[8]
    assert r["final_ratio"] < 1.0
    assert len(r["mean"]) == 31
    assert np.all(np.diff(r["mean"]) <= 1e-9)
    csv = (tmp_path / "decay_d8.csv").read_text().splitlines()
    assert csv[0] == "layer,mean_phi,ci_lo,ci_hi,overlay"
    assert len(csv) == 32
    assert (tmp_path / "decay_d8.dat").exists()
    assert (tmp_path / "decay_spec.json").exists()


def test_isometry_decay_rejects_nonlinear_config(tmp_path):
    cfg = NetworkConfig(width=8, batch=8, depth=30, classes=4, activation="tanh")
    spec = ExperimentSpec(kind="isometry", config=cfg, out_dir=str(tmp_path))
    with pytest.raises(ValueError, match="identity"):
        run_isometry_decay(spec)


def test_isometry_decay_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_isometry_decay(_decay_spec(a))
    run_isometry_decay(_decay_spec(b))
    for name in ("decay_d8.csv", "decay_d8.dat"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_isometry_decay_threads_match_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_isometry_decay(_decay_spec(a))
    spec = _decay_spec(b)
    from dataclasses import replace
    run_isometry_decay(replace(spec, threads=4))
    assert (a / "decay_d8.csv").read_bytes() == (b / "decay_d8.csv").read_bytes()


def _sweep_spec(out, **kw):
    cfg = NetworkConfig(width=8, batch=8, seed=0, classes=4)
    args = dict(kind="gradients", config=cfg, depths=(12, 14, 16, 18),
                n_seeds=2, out_dir=str(out))
    args.update(kw)
    return ExperimentSpec(**args)


def test_gradient_sweep_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    res = run_gradient_sweep(_sweep_spec(a))
    assert set(res) == {"haar", "gaussian"}
    for init in res:
        assert len(res[init]["mean_log_grad"]) == 4
        assert math.isfinite(res[init]["slope_per_layer"])
    lines = (a / "grad_sweep.csv").read_text().splitlines()
    assert lines[0] == "init,depth,seed,log_grad_fro_w1"
    assert len(lines) == 1 + 2 * 4 * 2
    slopes = json.loads((a / "grad_slopes.json").read_text())
    assert set(slopes) == {"haar", "gaussian"}
    assert (a / "grad_haar.dat").exists()
    assert (a / "grad_gaussian.dat").exists()

    run_gradient_sweep(_sweep_spec(b))
    for name in ("grad_sweep.csv", "grad_haar.dat", "grad_gaussian.dat",
                 "grad_slopes.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_gradient_sweep_needs_four_depths(tmp_path):
    with pytest.raises(ValueError, match=">= 4"):
        run_gradient_sweep(_sweep_spec(tmp_path, depths=(12, 14, 16)))


def test_weingarten_verify_outputs(tmp_path):
    cfg = NetworkConfig(seed=0)
    spec = ExperimentSpec(kind="weingarten", config=cfg, widths=(3,),
                          samples=2_000, lift_samples=150,
                          out_dir=str(tmp_path))
    res = run_weingarten_verify(spec)
    assert set(res["moments"]) == {(3, "E1"), (3, "E2"), (3, "deg2")}
    for est in res["moments"].values():
        assert abs(est.z_score) <= 3.0
    assert res["lift"].holds
    for name in ("moment_d3_E1.json", "moment_d3_E2.json",
                 "moment_d3_deg2.json", "lift_d3.json",
                 "weingarten_spec.json"):
        assert (tmp_path / name).exists(), name
    lift = json.loads((tmp_path / "lift_d3.json").read_text())
    assert lift["d"] == 3 and lift["holds"] is True


def test_shaping_suite_noop_for_identity(tmp_path):
    cfg = NetworkConfig(width=16, batch=16, depth=12, activation="identity",
                        seed=0)
    spec = ExperimentSpec(kind="shaping", config=cfg,
                          alphas=(0.4, 0.6, 0.8, 1.0, 1.2), layer=11,
                          n_seeds=2, out_dir=str(tmp_path))
    res = run_shaping_suite(spec)
    assert res["fit"] is None
    assert len(res["measurements"]) == 5
    rates = (tmp_path / "rates.csv").read_text().splitlines()
    assert rates[0] == "activation,d,L,layer,alpha,rate,seed"
    assert len(rates) == 1 + 5 * 2
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["fit"] is None and "no-op" in fit["reason"]


def test_rank_audit_runner(tmp_path):
    cfg = NetworkConfig(width=8, batch=8, classes=4, seed=0)
    spec = ExperimentSpec(kind="rank-audit", config=cfg,
                          dataset={"synthetic": "gaussian", "n": 64},
                          audit_n=8, trials=5, out_dir=str(tmp_path))
    audits = run_rank_audit(spec)
    assert len(audits) == 5
    assert all(a.rank == 8 for a in audits)
    assert (tmp_path / "rank_audit.csv").exists()
    assert (tmp_path / "rank_audit_spec.json").exists()


def test_rank_audit_csv_dataset(tmp_path):
    rows = ["%d,%s" % (i % 3, ",".join("%g" % v for v in
            derive(803, i).standard_normal(6))) for i in range(20)]
    p = tmp_path / "ds.csv"
    p.write_text("\n".join(rows) + "\n")
    cfg = NetworkConfig(width=8, batch=8, classes=4, seed=0)
    spec = ExperimentSpec(kind="rank-audit", config=cfg,
                          dataset={"csv": str(p)}, audit_n=4, trials=3,
                          out_dir=str(tmp_path))
    audits = run_rank_audit(spec)
    assert len(audits) == 3 and all(a.rank == 4 for a in audits)


def test_dataset_spec_required(tmp_path):
    cfg = NetworkConfig(width=8, batch=8, classes=4, seed=0)
    spec = ExperimentSpec(kind="rank-audit", config=cfg, dataset=None,
                          audit_n=4, trials=1, out_dir=str(tmp_path))
    with pytest.raises(ValueError, match="must name"):
        run_rank_audit(spec)


def test_training_smoke(tmp_path):
    cfg = NetworkConfig(width=16, batch=16, depth=4, seed=0)
    spec = ExperimentSpec(
        kind="train", config=cfg,
        dataset={"synthetic": "clusters", "features": 16, "n": 240},
        depths=(4,), lr=0.05, epochs=4, subset=240, out_dir=str(tmp_path),
    )
    res = run_training(spec)
    records = res[4]
    assert len(records) == 4
    assert [r.epoch for r in records] == [1, 2, 3, 4]
    for r in records:
        assert 0.0 <= r.accuracy <= 1.0
        assert math.isfinite(r.loss)
        assert r.phi_w.shape == (4,)
        assert r.grad_ratio_max >= 1.0
    # separable clusters at this lr: accuracy climbs well above chance (0.1)
    assert records[-1].accuracy > 0.5
    lines = (tmp_path / "train_d4.csv").read_text().splitlines()
    assert lines[0] == "epoch,accuracy,loss,phi_w_mid,phi_w_max,grad_ratio_max"
    assert len(lines) == 5
    phi_mat = load_matrix_csv(tmp_path / "train_phi_w_d4.csv")
    assert phi_mat.shape == (4, 4)
    assert (tmp_path / "train_spec.json").exists()


def test_training_shaped_tanh_smoke(tmp_path):
    cfg = NetworkConfig(width=16, batch=16, depth=12, activation="tanh",
                        gain=GainSchedule("power_law", exponent=1.0),
                        bn="standard", seed=0)
    spec = ExperimentSpec(
        kind="train", config=cfg,
        dataset={"synthetic": "clusters", "features": 16, "n": 240},
        depths=(12,), lr=0.05, epochs=4, subset=240, out_dir=str(tmp_path),
    )
    res = run_training(spec)
    records = res[12]
    assert records[-1].accuracy > 0.3
    assert all(math.isfinite(r.loss) for r in records)


def test_training_aborts_on_nonfinite_loss(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0,nan,1,1,1\n" + "\n".join(
        "1,%g,%g,%g,%g" % tuple(derive(804, i).standard_normal(4))
        for i in range(15)) + "\n")
    cfg = NetworkConfig(width=4, batch=4, depth=2, classes=2, seed=0)
    spec = ExperimentSpec(kind="train", config=cfg, dataset={"csv": str(p)},
                          depths=(2,), lr=0.01, epochs=1, subset=16,
                          out_dir=str(tmp_path))
    with pytest.raises(RuntimeError, match="non-finite"):
        run_training(spec)


def test_training_subset_smaller_than_minibatch(tmp_path):
    cfg = NetworkConfig(width=8, batch=64, depth=2, classes=4, seed=0)
    spec = ExperimentSpec(
        kind="train", config=cfg,
        dataset={"synthetic": "clusters", "features": 8, "n": 32},
        depths=(2,), epochs=1, subset=32, out_dir=str(tmp_path),
    )
    with pytest.raises(ValueError, match="minibatch"):
        run_training(spec)
