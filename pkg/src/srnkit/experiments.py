"""Desk-scale shattering experiment: memorisation of random labels on blobs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import TrainConfig, init_mlp, make_blobs, make_label_noise, random_centers, train


@dataclass(frozen=True)
class ShatteringConfig:
    n: int = 2000
    dim: int = 20
    n_classes: int = 10
    width: int = 256
    epochs: int = 500
    seeds: int = 5
    srank_ratio: float = 0.3
    center_scale: float = 2.0
    sigma: float = 1.0
    lr: float = 0.1
    momentum: float = 0.9
    batch_size: int = 128
    normalizers: tuple = ("none", "sn", "srn")
    include_clean: bool = True
    base_seed: int = 0


def blobs_for_seed(cfg: ShatteringConfig, seed: int):
    """Clean blobs and their fully relabelled twin for one seed."""
    centers = random_centers(cfg.n_classes, cfg.dim, cfg.center_scale, seed=10_000 + seed)
    clean = make_blobs(cfg.n, cfg.n_classes, centers, cfg.sigma, seed=seed)
    return clean, make_label_noise(clean, 1.0, seed=20_000 + seed)


def run_shattering(cfg: ShatteringConfig) -> list[dict]:
    """Train every normalizer on random (and optionally clean) labels per seed.

    Returns one row per (seed, labels, normalizer) with final train/test accuracy.
    """
    rows = []
    for s in range(cfg.seeds):
        seed = cfg.base_seed + s
        clean, rand = blobs_for_seed(cfg, seed)
        tcfg = TrainConfig(lr=cfg.lr, momentum=cfg.momentum, epochs=cfg.epochs,
                           batch_size=cfg.batch_size, seed=seed)
        sets = [("random", rand)] + ([("clean", clean)] if cfg.include_clean else [])
        for labels, ds in sets:
            for norm in cfg.normalizers:
                model = init_mlp([cfg.dim, cfg.width, cfg.n_classes], seed=seed, normalizer=norm,
                                 srank_ratio=cfg.srank_ratio if norm == "srn" else None)
                _, hist = train(model, ds, tcfg)
                rows.append({"seed": seed, "labels": labels, "normalizer": norm,
                             "train_acc": hist[-1]["train_acc"], "test_acc": hist[-1]["test_acc"]})
    return rows


def summarize(rows: list[dict]) -> dict:
    """Mean accuracies per (labels, normalizer) plus the SRN-vs-vanilla gaps in points."""
    means = {}
    for labels in sorted({r["labels"] for r in rows}):
        for norm in sorted({r["normalizer"] for r in rows}):
            sel = [r for r in rows if r["labels"] == labels and r["normalizer"] == norm]
            if sel:
                means[f"{labels}/{norm}"] = {
                    "train_acc": float(np.mean([r["train_acc"] for r in sel])),
                    "test_acc": float(np.mean([r["test_acc"] for r in sel])),
                }
    out = {"means": means}
    if "random/none" in means and "random/srn" in means:
        out["random_train_gap_points"] = 100 * (means["random/none"]["train_acc"]
                                                - means["random/srn"]["train_acc"])
    if "clean/none" in means and "clean/srn" in means:
        out["clean_test_gap_points"] = 100 * (means["clean/none"]["test_acc"]
                                              - means["clean/srn"]["test_acc"])
    return out
