"""Command-line entry point.

Subcommands map one-to-one onto the experiment runners:

    isometry    per-layer gap decay with the exp(-l/k) overlay
    gradients   first-layer gradient log-norm vs depth, per init
    degenerate  duplicated-column contrast against a full-rank control
    weingarten  closed-form moment checks and the expected-lift bound
    shaping     rate sweep, power-law fit, gain schedule, shaped contrast
    rank-audit  Gram rank and cosine audit of dataset sub-batches
    train       minibatch SGD over a depth axis with isometry telemetry

Exit codes: 0 success, 2 when a quantitative acceptance-style check fails
(a bound violated, a slope outside its band), 1 on any other error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import AcceptanceFailure
from .experiments import (
    ExperimentSpec,
    run_degenerate_contrast,
    run_gradient_sweep,
    run_isometry_decay,
    run_rank_audit,
    run_shaping_suite,
    run_training,
    run_weingarten_verify,
)
from .network import NetworkConfig, parse_config

__all__ = ["main", "build_parser"]


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isolab",
        description="isometry and gradient-propagation experiments for "
                    "BN chains with orthogonal weights",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="network config file (key = value lines)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="root seed override")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for independent sweep points")

    p = sub.add_parser("isometry", help="per-layer isometry gap decay")
    common(p)
    p.add_argument("--depths", type=_ints, default=(200,))
    p.add_argument("--widths", type=_ints, default=())
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--c-cal", type=float, default=None,
                   help="override the frozen overlay calibration constant")

    p = sub.add_parser("gradients", help="gradient log-norm vs depth per init")
    common(p)
    p.add_argument("--depths", type=_ints, default=(50, 100, 200, 500))
    p.add_argument("--seeds", type=int, default=10)

    p = sub.add_parser("degenerate", help="duplicated-column gradient contrast")
    common(p)
    p.add_argument("--depths", type=_ints, default=(50, 100, 200, 500))
    p.add_argument("--seeds", type=int, default=10)

    p = sub.add_parser("weingarten", help="moment and lift-bound verification")
    common(p)
    p.add_argument("--dims", type=_ints, default=(3, 4, 8))
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--lift-samples", type=int, default=2_000)

    p = sub.add_parser("shaping", help="explosion rate sweep and gain shaping")
    common(p)
    p.add_argument("--alphas", type=_floats, default=())
    p.add_argument("--layer", type=int, default=11)
    p.add_argument("--rate-seeds", type=int, default=5)
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--contrast-depths", type=_ints, default=(200, 300))

    p = sub.add_parser("rank-audit", help="Gram rank audit of a dataset")
    common(p)
    p.add_argument("--images", help="IDX image file")
    p.add_argument("--labels-file", help="IDX label file")
    p.add_argument("--csv", help="CSV dataset (label first column)")
    p.add_argument("--synth", choices=("gaussian", "orthogonal_cols", "duplicated"),
                   help="synthesize the dataset instead of loading one")
    p.add_argument("--synth-n", type=int, default=1024,
                   help="synthetic dataset size")
    p.add_argument("--n", type=int, default=128, help="audit batch size")
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("train", help="depth-axis SGD training runs")
    common(p)
    p.add_argument("--images", help="IDX image file")
    p.add_argument("--labels-file", help="IDX label file")
    p.add_argument("--csv", help="CSV dataset (label first column)")
    p.add_argument("--synth-clusters", action="store_true",
                   help="train on synthetic separable clusters")
    p.add_argument("--depths", type=_ints, default=(10, 50, 100))
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--subset", type=int, default=5000)

    return parser


def _config_from(args) -> NetworkConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            cfg = parse_config(f.read())
    else:
        cfg = NetworkConfig()
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _dataset_from(args) -> dict | None:
    if getattr(args, "images", None):
        if not getattr(args, "labels_file", None):
            raise ValueError("--images requires --labels-file")
        return {"images": args.images, "labels": args.labels_file}
    if getattr(args, "csv", None):
        return {"csv": args.csv}
    if getattr(args, "synth", None):
        return {"synthetic": args.synth, "n": args.synth_n}
    if getattr(args, "synth_clusters", False):
        return {"synthetic": "clusters"}
    return None


def _dispatch(args) -> None:
    cfg = _config_from(args)
    if args.command == "isometry":
        spec = ExperimentSpec(
            kind="isometry", config=cfg, depths=args.depths,
            widths=args.widths, n_seeds=args.seeds, out_dir=args.out,
            c_cal=args.c_cal, threads=args.threads,
        )
        res = run_isometry_decay(spec)
        for d, r in res.items():
            print(f"width {d}: phi0 {r['phi0']:.4f}, final mean ratio "
                  f"{r['final_ratio']:.3e}, overlay k {r['overlay_k']:.1f}")
    elif args.command == "gradients":
        spec = ExperimentSpec(
            kind="gradients", config=cfg, depths=args.depths,
            n_seeds=args.seeds, out_dir=args.out, threads=args.threads,
        )
        res = run_gradient_sweep(spec)
        for init, summary in res.items():
            print(f"{init}: slope {summary['slope_per_layer']:+.5f} per layer")
    elif args.command == "degenerate":
        spec = ExperimentSpec(
            kind="degenerate", config=cfg, depths=args.depths,
            n_seeds=args.seeds, out_dir=args.out, threads=args.threads,
        )
        res = run_degenerate_contrast(spec)
        print(f"control slope {res['control_slope']:+.5f}, "
              f"degenerate slope {res['degenerate_slope']:+.5f}")
    elif args.command == "weingarten":
        spec = ExperimentSpec(
            kind="weingarten", config=cfg, widths=args.dims,
            samples=args.samples, lift_samples=args.lift_samples,
            out_dir=args.out, threads=args.threads,
        )
        res = run_weingarten_verify(spec)
        for (d, pattern), est in res["moments"].items():
            print(f"d={d} {pattern}: z = {est.z_score:+.2f}")
        print(f"lift bound holds: {res['lift'].holds}")
    elif args.command == "shaping":
        spec = ExperimentSpec(
            kind="shaping", config=cfg, alphas=args.alphas,
            depths=args.contrast_depths, layer=args.layer,
            n_seeds=args.rate_seeds, k=args.k, out_dir=args.out,
            threads=args.threads,
        )
        res = run_shaping_suite(spec)
        if res["fit"] is None:
            print("no measurable explosion; shaping is a no-op")
        else:
            fit = res["fit"]
            print(f"fit: c1 {fit.c1:.4f}, c2 {fit.c2:.4f}, "
                  f"residual {fit.residual:.4f}")
    elif args.command == "rank-audit":
        spec = ExperimentSpec(
            kind="rank-audit", config=cfg, dataset=_dataset_from(args),
            audit_n=args.n, trials=args.trials, out_dir=args.out,
            threads=args.threads,
        )
        audits = run_rank_audit(spec)
        ranks = np.array([a.rank for a in audits], dtype=np.float64)
        print(f"n={args.n}: mean rank {ranks.mean():.2f} "
              f"+/- {ranks.std(ddof=1) if len(audits) > 1 else 0.0:.2f} "
              f"over {len(audits)} trials")
    elif args.command == "train":
        spec = ExperimentSpec(
            kind="train", config=cfg, dataset=_dataset_from(args),
            depths=args.depths, lr=args.lr, epochs=args.epochs,
            subset=args.subset, out_dir=args.out, threads=args.threads,
        )
        res = run_training(spec)
        for depth, records in res.items():
            last = records[-1]
            print(f"depth {depth}: accuracy {last.accuracy:.3f}, "
                  f"loss {last.loss:.4f}, max phi(W) "
                  f"{np.max(last.phi_w):.4f}")
    else:  # pragma: no cover - argparse enforces the choices
        raise ValueError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except AcceptanceFailure as e:
        print(f"acceptance check failed: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
