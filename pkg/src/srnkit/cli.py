"""``srnkit`` command line: normalize, measure, train, shattering, lowrank-demo.

Exit codes: 0 success, 2 unreadable/malformed input, 3 infeasible target
stable rank, 4 shape or argument errors. Outputs are written atomically, so
a failing command leaves no partial files behind.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import sys
from dataclasses import replace

from . import io
from .errors import DimensionMismatch, InfeasibleError, MatrixFormatError, NotSymmetricError, ZeroMatrixError
from .experiments import ShatteringConfig, blobs_for_seed, run_shattering, summarize
from .linalg import frobenius_norm, svd
from .measures import measure_report
from .mlp import TrainConfig, init_mlp, train
from .normalize import SrnConfig, spectral_normalize_optimal, srn_closed_form, srn_greedy, stable_rank
from .nystrom import NystromConfig, hard_threshold_rank, nystrom_lowrank


def _num(x: float):
    """Round to 12 significant digits so reruns serialise identically."""
    x = float(x)
    return float(format(x, ".12g")) if math.isfinite(x) else None


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _srn_config(args, k_default=0) -> SrnConfig | None:
    if args.target_srank is None and args.srank_ratio is None:
        return None
    k = k_default if args.k is None else args.k
    return SrnConfig(target_stable_rank=args.target_srank, ratio=args.srank_ratio,
                     partition_index=k, seed=args.seed)


def cmd_normalize(args) -> int:
    W = io.read_mat1(args.input)
    out = W
    gamma1 = gamma2 = 1.0
    was_noop = True
    preserved = None
    if args.spectral_cap is not None:
        out = spectral_normalize_optimal(out, args.spectral_cap)
    cfg = _srn_config(args)
    if cfg is not None:
        if args.method == "greedy":
            res = srn_greedy(out, cfg if cfg.partition_index >= 1 else replace(cfg, partition_index=1))
        else:
            res = srn_closed_form(out, cfg)
        out, gamma1, gamma2 = res.matrix, res.gamma1, res.gamma2
        was_noop, preserved = res.was_noop, res.preserved_count
    sidecar = {
        "schema": io.SCHEMA_VERSION,
        "stable_rank_before": _num(stable_rank(W)),
        "stable_rank_after": _num(stable_rank(out)),
        "sigma1_before": _num(svd(W).sigma[0]),
        "sigma1_after": _num(svd(out).sigma[0]),
        "gamma1": _num(gamma1),
        "gamma2": _num(gamma2),
        "was_noop": bool(was_noop),
        "preserved_count": preserved,
        "frobenius_distance": _num(frobenius_norm(out - W)),
    }
    io.write_mat1(args.output, out)
    io.atomic_write(args.output + ".json", _dump(sidecar))
    return 0


def cmd_measure(args) -> int:
    model = io.read_checkpoint(args.checkpoint)
    ds = io.read_dataset(args.input, n_classes=model.weights[-1].shape[0])
    report = measure_report(model, ds, seed=args.seed, n_draws=args.n_draws, n_pairs=args.n_pairs)
    io.atomic_write(args.output, report.to_json())
    return 0


def cmd_train(args) -> int:
    if args.input:
        ds = io.read_dataset(args.input)
    else:
        clean, rand = blobs_for_seed(ShatteringConfig(n=args.n, dim=args.dim, n_classes=args.classes), args.seed)
        ds = rand if args.random_labels else clean
    model = init_mlp([ds.inputs.shape[1], args.width, ds.n_classes], seed=args.seed,
                     normalizer=args.normalizer,
                     srank_ratio=args.srank_ratio if args.normalizer == "srn" else None)
    cfg = TrainConfig(lr=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
                      epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
                      stop_accuracy=args.stop_accuracy)
    model, history = train(model, ds, cfg)
    buf = _io.StringIO()
    keys = ["epoch", "train_loss", "train_acc", "test_loss", "test_acc"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(keys)
    for rec in history:
        writer.writerow([rec["epoch"]] + [format(rec[k], ".12g") for k in keys[1:] if k in rec])
    io.write_checkpoint(args.output, model)
    io.atomic_write(args.output + ".history.csv", buf.getvalue())
    return 0


def cmd_shattering(args) -> int:
    cfg = ShatteringConfig(n=args.n, dim=args.dim, n_classes=args.classes, width=args.width,
                           epochs=args.epochs, seeds=args.seeds, lr=args.lr,
                           srank_ratio=args.srank_ratio if args.srank_ratio is not None else 0.3,
                           normalizers=tuple(args.normalizer or ("none", "sn", "srn")),
                           include_clean=not args.no_clean, base_seed=args.seed)
    rows = run_shattering(cfg)
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["seed", "labels", "normalizer", "train_acc", "test_acc"])
    for r in rows:
        writer.writerow([r["seed"], r["labels"], r["normalizer"],
                         format(r["train_acc"], ".12g"), format(r["test_acc"], ".12g")])
    summary = summarize(rows)
    summary = json.loads(json.dumps(summary), parse_float=lambda s: _num(float(s)))
    io.atomic_write(args.output, buf.getvalue())
    io.atomic_write(args.output + ".json", _dump({"schema": io.SCHEMA_VERSION, **summary}))
    return 0


def cmd_lowrank_demo(args) -> int:
    W = io.read_mat1(args.input)
    if args.nystrom:
        cfg = NystromConfig(target_rank=args.rank, sample_count=args.sample_count,
                            ensemble_runs=args.ensemble_runs, seed=args.seed)
        out = nystrom_lowrank(W, cfg)
    else:
        out = hard_threshold_rank(W, args.rank)
    best = hard_threshold_rank(W, args.rank)
    sidecar = {
        "schema": io.SCHEMA_VERSION,
        "method": "nystrom" if args.nystrom else "truncated_svd",
        "rank": args.rank,
        "frobenius_error": _num(frobenius_norm(out - W)),
        "optimal_frobenius_error": _num(frobenius_norm(best - W)),
        "symmetry_error": _num(frobenius_norm(out - out.T)) if out.shape[0] == out.shape[1] else None,
    }
    io.write_mat1(args.output, out)
    io.atomic_write(args.output + ".json", _dump(sidecar))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="srnkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True):
        sp.add_argument("--input", required=needs_input)
        sp.add_argument("--output", required=True)
        sp.add_argument("--seed", type=int, default=0)

    def srank_flags(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--target-srank", type=float)
        g.add_argument("--srank-ratio", type=float)

    sp = sub.add_parser("normalize", help="spectral / stable-rank normalize a MAT1 matrix")
    common(sp)
    srank_flags(sp)
    sp.add_argument("--k", type=int)
    sp.add_argument("--spectral-cap", type=float)
    sp.add_argument("--method", choices=["closed-form", "greedy"], default="closed-form")
    sp.set_defaults(func=cmd_normalize)

    sp = sub.add_parser("measure", help="complexity measures of a checkpoint on a dataset")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--n-draws", type=int, default=1000)
    sp.add_argument("--n-pairs", type=int, default=2000)
    sp.set_defaults(func=cmd_measure)

    def train_flags(sp, epochs):
        sp.add_argument("--epochs", type=int, default=epochs)
        sp.add_argument("--lr", type=float, default=0.1)
        sp.add_argument("--width", type=int, default=256)
        sp.add_argument("--n", type=int, default=2000)
        sp.add_argument("--dim", type=int, default=20)
        sp.add_argument("--classes", type=int, default=10)

    sp = sub.add_parser("train", help="train an MLP on a dataset file or synthetic blobs")
    common(sp, needs_input=False)
    train_flags(sp, 100)
    sp.add_argument("--normalizer", choices=["none", "sn", "srn"], default="none")
    sp.add_argument("--srank-ratio", type=float, default=0.3)
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--weight-decay", type=float, default=0.0)
    sp.add_argument("--batch-size", type=int, default=128)
    sp.add_argument("--stop-accuracy", type=float)
    sp.add_argument("--random-labels", action="store_true")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("shattering", help="random-label memorisation: vanilla vs SN vs SRN")
    common(sp, needs_input=False)
    train_flags(sp, 500)
    sp.add_argument("--seeds", type=int, default=5)
    sp.add_argument("--srank-ratio", type=float, default=0.3)
    sp.add_argument("--normalizer", choices=["none", "sn", "srn"], action="append")
    sp.add_argument("--no-clean", action="store_true", help="skip the clean-label runs")
    sp.set_defaults(func=cmd_shattering)

    sp = sub.add_parser("lowrank-demo", help="rank-r projection by truncated SVD or Nystrom")
    common(sp)
    sp.add_argument("--rank", type=int, required=True)
    sp.add_argument("--nystrom", action="store_true")
    sp.add_argument("--ensemble-runs", type=int, default=1)
    sp.add_argument("--sample-count", type=int)
    sp.set_defaults(func=cmd_lowrank_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MatrixFormatError, OSError) as exc:
        print(f"srnkit: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"srnkit: infeasible: {exc}", file=sys.stderr)
        return 3
    except (DimensionMismatch, NotSymmetricError, ZeroMatrixError, ValueError) as exc:
        print(f"srnkit: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
