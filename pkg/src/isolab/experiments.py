"""Experiment orchestration: seeded sweeps, file emission, training runs.

Every experiment takes an ExperimentSpec, runs a deterministic seeded
sweep, writes machine-readable outputs (CSV/JSON plus gnuplot-ready .dat
series), and records the full spec in a sidecar JSON so each output file
can be regenerated from the sidecar alone. Identical specs produce
byte-identical files.

Stream layout under the root seed: weights use key (0, ...), inputs (2,
...), labels (3, ...), Monte Carlo (4/5), subset selection (6), feature
projection (7), epoch shuffling (8), derived per-seed folds (9). Keys
never collide across experiments run from the same root.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import calibration
from .data import Batch, load_csv_batch, load_idx, project_to_width, rank_audit, \
    synth_batch, write_audit_csv
from .errors import AcceptanceFailure
from .gradients import LossKind, backward, sgd_step
from .io import save_matrix_csv
from .moments import MomentSpec, moment_report_json, verify_isometry_lift, \
    verify_moment_mc
from .network import GainSchedule, NetworkConfig, bn_simplified, forward, \
    sample_network_weights
from .rng import as_generator, derive
from .shaping import RateMeasurement, fit_power_law, gain_schedule_from_fit, \
    measure_rate_single
from .spectral import isometry_gap, sample_haar_orthogonal

__all__ = [
    "ExperimentSpec",
    "TrainRecord",
    "run_isometry_decay",
    "run_gradient_sweep",
    "run_degenerate_contrast",
    "run_weingarten_verify",
    "run_shaping_suite",
    "run_rank_audit",
    "run_training",
    "make_cluster_batch",
    "emit_plot_data",
    "write_sidecar",
]

_NOISE_FLOOR = 0.05  # |rate| below this is indistinguishable from zero


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one experiment needs, including its sweep axes.

    Axes that an experiment does not use are ignored. The config's seed is
    the root of every derived stream, so the spec fully determines every
    byte of output.
    """

    kind: str
    config: NetworkConfig = field(default_factory=NetworkConfig)
    depths: tuple = ()
    widths: tuple = ()
    alphas: tuple = ()
    n_seeds: int = 10
    samples: int = 100_000
    lift_samples: int = 2_000
    layer: int = 11
    k: float = 2.0
    lr: float = 0.001
    epochs: int = 30
    subset: int = 5000
    dataset: dict | None = None
    audit_n: int = 128
    trials: int = 100
    out_dir: str = "out"
    c_cal: float | None = None
    threads: int = 1

    def cal_constant(self) -> float:
        c = self.c_cal if self.c_cal is not None else calibration.C_CAL
        if math.isnan(c):
            raise ValueError("no calibration constant available; pass c_cal")
        return c


@dataclass(frozen=True)
class TrainRecord:
    """One epoch of one training run."""

    epoch: int
    accuracy: float
    loss: float
    phi_w: np.ndarray
    grad_fro: np.ndarray
    grad_ratio_max: float


# --- shared plumbing ---------------------------------------------------------

def _ensure_out(spec: ExperimentSpec) -> str:
    os.makedirs(spec.out_dir, exist_ok=True)
    return spec.out_dir


def _run_tasks(tasks: dict, threads: int) -> dict:
    """Run {key: thunk} and return {key: result} in sorted-key order.

    With threads > 1 the thunks run on a pool; collection is still by
    sorted key, so output order never depends on scheduling.
    """
    keys = sorted(tasks)
    if threads <= 1:
        return {k: tasks[k]() for k in keys}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {k: pool.submit(tasks[k]) for k in keys}
        return {k: futures[k].result() for k in keys}


def _spec_dict(spec: ExperimentSpec) -> dict:
    d = asdict(spec)
    d["config"]["gain"] = asdict(spec.config.gain)
    return d


def write_sidecar(spec: ExperimentSpec, name: str) -> str:
    """Write the full spec next to the experiment outputs."""
    path = os.path.join(_ensure_out(spec), name)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_spec_dict(spec), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def emit_plot_data(series, path) -> None:
    """Write a gnuplot-ready series: columns x, y, optionally y_lo, y_hi.

    series is a mapping with arrays under "x" and "y", plus optional
    "y_lo"/"y_hi" band columns (both or neither). Empty series are errors.
    """
    x = np.asarray(series["x"], dtype=np.float64)
    y = np.asarray(series["y"], dtype=np.float64)
    if x.size == 0 or y.size == 0:
        raise ValueError("empty series")
    if x.shape != y.shape:
        raise ValueError("x and y must have equal length")
    lo = series.get("y_lo")
    hi = series.get("y_hi")
    if (lo is None) != (hi is None):
        raise ValueError("band needs both y_lo and y_hi")
    with open(path, "w", encoding="ascii", newline="\n") as f:
        for i in range(x.size):
            if lo is None:
                f.write(f"{x[i]:.17g} {y[i]:.17g}\n")
            else:
                f.write(
                    f"{x[i]:.17g} {y[i]:.17g} {lo[i]:.17g} {hi[i]:.17g}\n"
                )


def _ci_band(per_seed: np.ndarray):
    """Mean and 95% band (mean +/- 1.96 stderr) across the seed axis 0."""
    mean = per_seed.mean(axis=0)
    if per_seed.shape[0] < 2:
        return mean, mean.copy(), mean.copy()
    se = per_seed.std(axis=0, ddof=1) / math.sqrt(per_seed.shape[0])
    return mean, mean - 1.96 * se, mean + 1.96 * se


# --- isometry decay ----------------------------------------------------------

def run_isometry_decay(spec: ExperimentSpec) -> dict:
    """Mean per-layer gap decay with the exp(-l/k) overlay.

    Theory path only: identity activation, orthogonal weights, simplified
    BN, batch = width. One Gaussian input is shared by all seeds of a
    width; each seed redraws the weights. Any non-monotone run is a hard
    failure.
    """
    cfg = spec.config
    if cfg.activation != "identity" or cfg.init != "haar" or cfg.bn != "simplified":
        raise ValueError(
            "decay experiment needs identity activation, haar init, simplified BN"
        )
    out = _ensure_out(spec)
    root = cfg.seed
    widths = spec.widths or (cfg.width,)
    depth = max(spec.depths) if spec.depths else cfg.depth
    c_cal = spec.cal_constant()

    def _curve(d: int, s: int, x0) -> np.ndarray:
        # the decay chain has no classifier, so clamp classes for small widths
        wcfg = replace(cfg, width=d, batch=d, depth=depth,
                       classes=min(cfg.classes, d))
        weights, _ = sample_network_weights(wcfg, derive(root, 0, d, s))
        tape = forward(wcfg, x0, weights)
        phis = np.array([isometry_gap(x) for x in tape.xs])
        steps = np.flatnonzero(phis[1:] > phis[:-1] + 1e-9)
        if steps.size:
            raise AcceptanceFailure(
                f"gap increased at layer {int(steps[0]) + 1} "
                f"(width {d}, seed {s}): {phis[steps[0]]:.3e} -> "
                f"{phis[steps[0] + 1]:.3e}"
            )
        return phis

    results = {}
    for d in widths:
        x0 = derive(root, 2, d).standard_normal((d, d))
        phi0 = isometry_gap(x0)
        if math.isinf(phi0):
            raise ValueError(
                f"degenerate input at width {d}: the sampled matrix is "
                f"rank-deficient, decay is undefined"
            )
        tasks = {s: (lambda s=s: _curve(d, s, x0)) for s in range(spec.n_seeds)}
        curves = np.stack(list(_run_tasks(tasks, spec.threads).values()))
        mean, lo, hi = _ci_band(curves)
        k = calibration.decay_scale(d, phi0, c_cal)
        layers = np.arange(depth + 1, dtype=np.float64)
        overlay = phi0 * np.exp(-layers / k)

        csv_path = os.path.join(out, f"decay_d{d}.csv")
        with open(csv_path, "w", encoding="ascii", newline="\n") as f:
            f.write("layer,mean_phi,ci_lo,ci_hi,overlay\n")
            for i in range(depth + 1):
                f.write(
                    f"{i},{mean[i]:.17g},{lo[i]:.17g},{hi[i]:.17g},"
                    f"{overlay[i]:.17g}\n"
                )
        emit_plot_data(
            {"x": layers, "y": mean, "y_lo": lo, "y_hi": hi},
            os.path.join(out, f"decay_d{d}.dat"),
        )
        results[d] = {
            "phi0": phi0, "mean": mean, "overlay_k": k,
            "final_ratio": float(mean[-1] / phi0),
        }
    write_sidecar(spec, "decay_spec.json")
    return results


# --- gradient sweeps ---------------------------------------------------------

def _first_layer_log_grad(cfg: NetworkConfig, root: int, depth: int, s: int,
                          batch_kind: str) -> float:
    """log Frobenius norm of the first-layer gradient for one seeded net."""
    dcfg = replace(cfg, depth=depth)
    weights, classifier = sample_network_weights(
        dcfg, derive(root, 0, depth, s, _init_tag(cfg.init))
    )
    if batch_kind == "gaussian":
        x0 = derive(root, 2, s).standard_normal((cfg.width, cfg.batch))
    elif batch_kind == "duplicated":
        x0 = synth_batch(
            "duplicated", cfg.width, cfg.batch, derive(root, 2, s)
        ).data
    else:
        raise ValueError(f"unknown batch kind {batch_kind!r}")
    labels = derive(root, 3, s).integers(0, cfg.classes, cfg.batch)
    tape = forward(dcfg, x0, weights, classifier)
    result = backward(tape, LossKind("cross_entropy_softmax", labels))
    return float(result.report.log_grad_fro[0])


def _init_tag(init: str) -> int:
    return 0 if init == "haar" else 1


def run_gradient_sweep(spec: ExperimentSpec, inits=("haar", "gaussian"),
                       batch_kind: str = "gaussian", tag: str = "grad") -> dict:
    """Mean first-layer gradient log-norm vs. depth, per weight init.

    Fits an affine slope per init across the depth axis. Needs at least 4
    depths so the slope means something.
    """
    if len(spec.depths) < 4:
        raise ValueError("gradient sweep needs a depth axis with >= 4 points")
    out = _ensure_out(spec)
    cfg = spec.config
    root = cfg.seed
    depths = tuple(sorted(spec.depths))

    rows = []
    summary = {}
    for init in inits:
        icfg = replace(cfg, init=init)
        tasks = {
            (depth, s): (lambda depth=depth, s=s:
                         _first_layer_log_grad(icfg, root, depth, s, batch_kind))
            for depth in depths for s in range(spec.n_seeds)
        }
        got = _run_tasks(tasks, spec.threads)
        per_seed = np.array(
            [[got[(depth, s)] for s in range(spec.n_seeds)] for depth in depths]
        )
        for di, depth in enumerate(depths):
            for s in range(spec.n_seeds):
                rows.append((init, depth, s, per_seed[di, s]))
        mean, lo, hi = _ci_band(per_seed.T)
        slope = float(np.polyfit(np.asarray(depths, dtype=np.float64), mean, 1)[0])
        summary[init] = {
            "slope_per_layer": slope,
            "mean_log_grad": mean,
            "depths": depths,
        }
        emit_plot_data(
            {"x": np.asarray(depths, dtype=np.float64), "y": mean,
             "y_lo": lo, "y_hi": hi},
            os.path.join(out, f"{tag}_{init}.dat"),
        )

    csv_path = os.path.join(out, f"{tag}_sweep.csv")
    with open(csv_path, "w", encoding="ascii", newline="\n") as f:
        f.write("init,depth,seed,log_grad_fro_w1\n")
        for init, depth, s, v in rows:
            f.write(f"{init},{depth},{s},{v:.17g}\n")
    with open(os.path.join(out, f"{tag}_slopes.json"), "w",
              encoding="utf-8", newline="\n") as f:
        json.dump(
            {init: summary[init]["slope_per_layer"] for init in summary},
            f, indent=2, sort_keys=True,
        )
        f.write("\n")
    write_sidecar(spec, f"{tag}_spec.json")
    return summary


def run_degenerate_contrast(spec: ExperimentSpec, strict: bool = True) -> dict:
    """Full-rank vs. duplicated-column batches under orthogonal weights.

    The duplicated batch must flip the first-layer gradient slope from the
    bounded band (-0.01, 0.01) to above 0.01/layer; with strict=True a
    missing flip raises AcceptanceFailure.
    """
    control = run_gradient_sweep(spec, inits=("haar",), batch_kind="gaussian",
                                 tag="degen_control")
    degen = run_gradient_sweep(spec, inits=("haar",), batch_kind="duplicated",
                               tag="degen_dup")
    c_slope = control["haar"]["slope_per_layer"]
    d_slope = degen["haar"]["slope_per_layer"]
    result = {"control_slope": c_slope, "degenerate_slope": d_slope}
    if strict:
        if not (-0.01 < c_slope < 0.01):
            raise AcceptanceFailure(
                f"full-rank control slope {c_slope:.5f} left the bounded "
                f"band (-0.01, 0.01)"
            )
        if d_slope <= 0.01:
            raise AcceptanceFailure(
                f"duplicated-column slope {d_slope:.5f} is not above 0.01"
            )
    with open(os.path.join(_ensure_out(spec), "degenerate_contrast.json"),
              "w", encoding="utf-8", newline="\n") as f:
        json.dump(result, f, indent=2, sort_keys=True)
        f.write("\n")
    return result


# --- moment verification -----------------------------------------------------

def run_weingarten_verify(spec: ExperimentSpec) -> dict:
    """Closed-form moment checks plus the expected-lift bound check.

    Each moment estimate gets one rerun with a fresh seed before a
    3-standard-error miss counts as failure (the band itself has a 0.3%
    false-alarm rate per check).
    """
    out = _ensure_out(spec)
    root = spec.config.seed
    dims = spec.widths or (3, 4, 8)
    estimates = {}
    for d in dims:
        for pattern in ("E1", "E2", "deg2"):
            mspec = MomentSpec(d=int(d), pattern=pattern)
            seed = int(derive(root, 4, d, 0).integers(0, 2**63 - 1))
            est = verify_moment_mc(mspec, spec.samples, seed)
            if abs(est.z_score) > 3.0:
                seed = int(derive(root, 4, d, 1).integers(0, 2**63 - 1))
                est = verify_moment_mc(mspec, spec.samples, seed)
                if abs(est.z_score) > 3.0:
                    raise AcceptanceFailure(
                        f"moment {pattern} at d={d} off by "
                        f"{est.z_score:.2f} standard errors after rerun"
                    )
            estimates[(int(d), pattern)] = est
            with open(os.path.join(out, f"moment_d{d}_{pattern}.json"),
                      "w", encoding="utf-8", newline="\n") as f:
                f.write(moment_report_json(est))
                f.write("\n")

    lift_d = int(min(dims)) if min(dims) >= 3 else 4
    x = bn_simplified(derive(root, 5).standard_normal((lift_d, lift_d)))
    report = verify_isometry_lift(x, spec.lift_samples, derive(root, 5, 1))
    with open(os.path.join(out, f"lift_d{lift_d}.json"), "w",
              encoding="utf-8", newline="\n") as f:
        json.dump(
            {k: v for k, v in asdict(report).items()},
            f, indent=2, sort_keys=True,
        )
        f.write("\n")
    write_sidecar(spec, "weingarten_spec.json")
    return {"moments": estimates, "lift": report}


# --- shaping suite -----------------------------------------------------------

def run_shaping_suite(spec: ExperimentSpec) -> dict:
    """Rate sweep -> power-law fit -> gain schedule -> shaped contrast.

    With an identity-activation config the sweep measures only the noise
    floor; the suite then reports shaping as a no-op instead of fitting.
    A fit failure on a nonlinear sweep is surfaced together with the path
    of the sweep data that caused it.
    """
    out = _ensure_out(spec)
    cfg = spec.config
    root = cfg.seed
    alphas = spec.alphas or tuple(np.geomspace(0.2, 1.25, 8))
    layer = spec.layer
    rate_csv = os.path.join(out, "rates.csv")

    averaged = []
    with open(rate_csv, "w", encoding="ascii", newline="\n") as f:
        f.write("activation,d,L,layer,alpha,rate,seed\n")
        for alpha in alphas:
            per_seed = []
            for s in range(spec.n_seeds):
                seed = int(derive(root, 9, s).integers(0, 2**63 - 1))
                r = measure_rate_single(cfg, layer, float(alpha), seed)
                per_seed.append(r)
                f.write(
                    f"{cfg.activation},{cfg.width},{cfg.depth},{layer},"
                    f"{alpha:.17g},{r:.17g},{s}\n"
                )
            averaged.append(
                RateMeasurement(
                    layer=layer, alpha=float(alpha),
                    rate=float(np.mean(per_seed)), depth=cfg.depth,
                    activation=cfg.activation, seed=root,
                    n_seeds=spec.n_seeds,
                )
            )

    if all(abs(m.rate) < _NOISE_FLOOR for m in averaged):
        with open(os.path.join(out, "fit.json"), "w", encoding="utf-8",
                  newline="\n") as f:
            json.dump(
                {"fit": None,
                 "reason": "all rates within the noise floor; shaping is a no-op"},
                f, indent=2, sort_keys=True,
            )
            f.write("\n")
        write_sidecar(spec, "shaping_spec.json")
        return {"fit": None, "measurements": averaged}

    try:
        fit = fit_power_law(averaged)
    except ValueError as e:
        raise ValueError(f"{e} (sweep data: {rate_csv})") from e
    with open(os.path.join(out, "fit.json"), "w", encoding="utf-8",
              newline="\n") as f:
        json.dump(
            {"c1": fit.c1, "c2": fit.c2, "residual": fit.residual,
             "n_points": fit.n_points},
            f, indent=2, sort_keys=True,
        )
        f.write("\n")

    schedule = gain_schedule_from_fit(fit, spec.k, max(spec.depths or (cfg.depth,)))
    contrast_depths = tuple(sorted(spec.depths)) or (200, 300)
    rows = []
    means = {}
    for variant, gain in (
        ("unshaped", GainSchedule("constant", 1.0)),
        ("shaped", schedule),
    ):
        vcfg = replace(cfg, gain=gain)
        per_depth = []
        for depth in contrast_depths:
            vals = []
            for s in range(spec.n_seeds):
                dcfg = replace(vcfg, depth=depth)
                weights, classifier = sample_network_weights(
                    dcfg, derive(root, 0, depth, s)
                )
                x0 = derive(root, 2, s).standard_normal((cfg.width, cfg.batch))
                labels = derive(root, 3, s).integers(0, cfg.classes, cfg.batch)
                tape = forward(dcfg, x0, weights, classifier)
                res = backward(tape, LossKind("cross_entropy_softmax", labels))
                v = float(res.report.log_grad_fro[0])
                vals.append(v)
                rows.append((variant, depth, s, v))
            per_depth.append(float(np.mean(vals)))
        means[variant] = dict(zip(contrast_depths, per_depth))

    with open(os.path.join(out, "shaped_contrast.csv"), "w",
              encoding="ascii", newline="\n") as f:
        f.write("variant,depth,seed,log_grad_fro_w1\n")
        for variant, depth, s, v in rows:
            f.write(f"{variant},{depth},{s},{v:.17g}\n")
    write_sidecar(spec, "shaping_spec.json")
    return {
        "fit": fit, "schedule_exponent": schedule.exponent,
        "measurements": averaged, "contrast": means,
    }


# --- rank audit ---------------------------------------------------------------

def run_rank_audit(spec: ExperimentSpec) -> list:
    """Audit Gram ranks of sampled sub-batches of the configured dataset."""
    out = _ensure_out(spec)
    batch = _load_dataset(spec)
    audits = rank_audit(batch, spec.trials, spec.audit_n,
                        derive(spec.config.seed, 6))
    write_audit_csv(audits, os.path.join(out, "rank_audit.csv"))
    write_sidecar(spec, "rank_audit_spec.json")
    return audits


# --- training ----------------------------------------------------------------

def make_cluster_batch(features: int, n: int, classes: int, rng,
                       separation: float = 2.0, noise: float = 0.6) -> Batch:
    """Linearly separable Gaussian clusters on orthonormal mean directions.

    A stand-in for image data when no dataset file is available: class c
    sits at separation * (orthonormal direction c) plus isotropic noise.
    """
    rng = as_generator(rng)
    if classes > features:
        raise ValueError("need classes <= features for orthonormal means")
    means = sample_haar_orthogonal(features, rng)[:classes, :] * separation
    labels = rng.integers(0, classes, n)
    data = means[labels].T + noise * rng.standard_normal((features, n))
    return Batch(data=data, labels=labels,
                 source=f"synthetic(clusters, c={classes})")


def _load_dataset(spec: ExperimentSpec) -> Batch:
    ds = spec.dataset or {}
    if "images" in ds:
        return load_idx(ds["images"], ds["labels"])
    if "csv" in ds:
        return load_csv_batch(ds["csv"])
    if "synthetic" in ds:
        root = spec.config.seed
        if ds["synthetic"] == "clusters":
            return make_cluster_batch(
                int(ds.get("features", spec.config.width)),
                int(ds.get("n", spec.subset)),
                spec.config.classes,
                derive(root, 6, 1),
                separation=float(ds.get("separation", 2.0)),
                noise=float(ds.get("noise", 0.6)),
            )
        return synth_batch(ds["synthetic"], spec.config.width,
                           int(ds.get("n", spec.subset)), derive(root, 6, 1))
    raise ValueError("spec.dataset must name images/labels, csv, or synthetic")


def _subset(batch: Batch, size: int, rng) -> Batch:
    if size >= batch.count:
        return batch
    idx = np.sort(rng.choice(batch.count, size=size, replace=False))
    return Batch(data=batch.data[:, idx], labels=batch.labels[idx],
                 source=f"{batch.source} [{size}]")


def _accuracy(cfg: NetworkConfig, weights, classifier, data, labels) -> float:
    hits = 0
    n = data.shape[1]
    step = 1024
    for start in range(0, n, step):
        cols = slice(start, min(start + step, n))
        tape = forward(cfg, data[:, cols], weights, classifier)
        hits += int(np.sum(np.argmax(tape.logits, axis=0) == labels[cols]))
    return hits / n


def run_training(spec: ExperimentSpec) -> dict:
    """Minibatch SGD over the depth axis, with isometry telemetry.

    Trains every layer plus the classifier with plain SGD. Per epoch:
    train accuracy over the whole subset, mean minibatch loss, phi of
    every weight matrix, the last step's per-layer gradient norms, and
    the running maximum of gradient norms relative to initialization.
    A NaN loss aborts with layer diagnostics.
    """
    out = _ensure_out(spec)
    cfg = spec.config
    root = cfg.seed
    base = _load_dataset(spec)
    base = _subset(base, spec.subset, derive(root, 6))
    if base.features != cfg.width:
        base = project_to_width(base, cfg.width, derive(root, 7))

    depths = spec.depths or (cfg.depth,)
    all_records: dict[int, list[TrainRecord]] = {}
    for depth in depths:
        dcfg = replace(cfg, depth=depth)
        weights, classifier = sample_network_weights(dcfg, derive(root, 0, depth))
        init_fro = None
        ratio_max = 0.0
        records: list[TrainRecord] = []
        nbatch = cfg.batch
        steps = base.count // nbatch
        if steps < 1:
            raise ValueError("subset smaller than one minibatch")

        for epoch in range(1, spec.epochs + 1):
            order = derive(root, 8, depth, epoch).permutation(base.count)
            losses = []
            last_report = None
            for step in range(steps):
                cols = order[step * nbatch:(step + 1) * nbatch]
                tape = forward(dcfg, base.data[:, cols], weights, classifier)
                if not np.isfinite(tape.logits).all():
                    raise RuntimeError(
                        f"activations became non-finite at depth {depth}, "
                        f"epoch {epoch}, step {step + 1}; check the input "
                        f"data and learning rate"
                    )
                res = backward(
                    tape,
                    LossKind("cross_entropy_softmax", base.labels[cols]),
                )
                if not math.isfinite(res.loss):
                    diag = ", ".join(
                        f"L{i + 1}:|W|max={np.abs(w).max():.3e}"
                        for i, w in enumerate(weights[: min(5, depth)])
                    )
                    raise RuntimeError(
                        f"loss became non-finite at depth {depth}, epoch "
                        f"{epoch}, step {step + 1}; first layers: {diag}"
                    )
                if init_fro is None:
                    init_fro = res.report.grad_fro.copy()
                ratio_max = max(
                    ratio_max,
                    float(np.max(res.report.grad_fro / init_fro)),
                )
                losses.append(res.loss)
                new = sgd_step(
                    weights + [classifier],
                    res.weight_grads + [res.classifier_grad],
                    spec.lr,
                )
                weights, classifier = new[:-1], new[-1]
                last_report = res.report

            acc = _accuracy(dcfg, weights, classifier, base.data, base.labels)
            records.append(
                TrainRecord(
                    epoch=epoch,
                    accuracy=acc,
                    loss=float(np.mean(losses)),
                    phi_w=np.array([isometry_gap(w) for w in weights]),
                    grad_fro=last_report.grad_fro.copy(),
                    grad_ratio_max=ratio_max,
                )
            )

        all_records[depth] = records
        csv_path = os.path.join(out, f"train_d{depth}.csv")
        with open(csv_path, "w", encoding="ascii", newline="\n") as f:
            f.write("epoch,accuracy,loss,phi_w_mid,phi_w_max,grad_ratio_max\n")
            for r in records:
                mid = r.phi_w[len(r.phi_w) // 2]
                f.write(
                    f"{r.epoch},{r.accuracy:.17g},{r.loss:.17g},"
                    f"{mid:.17g},{np.max(r.phi_w):.17g},"
                    f"{r.grad_ratio_max:.17g}\n"
                )
        save_matrix_csv(
            np.stack([r.phi_w for r in records]),
            os.path.join(out, f"train_phi_w_d{depth}.csv"),
        )
    write_sidecar(spec, "train_spec.json")
    return all_records
