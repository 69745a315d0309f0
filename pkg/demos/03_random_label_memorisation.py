"""A short shattering run: how well can each network memorise random labels?

Each label is replaced by a uniformly random class, so only memorisation can
fit it. Vanilla training drives train accuracy up; stable rank normalization
(c = 0.3) holds it near chance while clean-label accuracy is unaffected.
This uses 150 epochs and a single seed so it finishes in about a minute; the
acceptance suite runs the full 500-epoch, 5-seed version.
"""
from srnkit.experiments import ShatteringConfig, run_shattering, summarize

cfg = ShatteringConfig(epochs=150, seeds=1)
rows = run_shattering(cfg)
for r in rows:
    print(f"{r['labels']:6s} {r['normalizer']:4s} train={r['train_acc']:.3f} test={r['test_acc']:.3f}")

s = summarize(rows)
print(f"random-label train gap (vanilla - SRN): {s['random_train_gap_points']:.1f} points")
print(f"clean-label test gap (vanilla - SRN):  {s['clean_test_gap_points']:.1f} points")
