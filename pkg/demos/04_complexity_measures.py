"""Margin-based complexity of a vanilla and an SRN-trained network.

Both are trained on the same blobs. The report holds per-sample margins,
Spec-Fro, Spec-L1 and Jac-Norm values, the noise sensitivity, layer cushions
and empirical Lipschitz ratios.
"""
import numpy as np

from srnkit import TrainConfig, init_mlp, make_blobs, measure_report, random_centers, train

ds = make_blobs(1000, 5, random_centers(5, 10, 2.0, seed=3), 1.0, seed=3)
for norm, c in (("none", None), ("srn", 0.3)):
    model, hist = train(init_mlp([10, 64, 5], seed=0, normalizer=norm, srank_ratio=c), ds,
                        TrainConfig(epochs=40))
    rep = measure_report(model, ds, n_draws=200, n_pairs=500)
    print(f"--- {norm}: train acc {hist[-1]['train_acc']:.3f}, test acc {hist[-1]['test_acc']:.3f}")
    for key, val in rep.percentile_90_log.items():
        print(f"  90th pct log {key:9s} {val:8.3f}")
    print(f"  noise sensitivity   {rep.noise_sensitivity:.3f} +- {rep.noise_sensitivity_stderr:.3f}")
    print(f"  layer cushions      {np.round(rep.layer_cushions, 4)}")
    print(f"  Lipschitz bound     {rep.lipschitz_upper:.3f}, eLhist p95 {rep.elhist_percentile_95:.3f}")
