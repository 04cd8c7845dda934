#!/usr/bin/env python3
"""Subgroup proportion curves and quality-distribution overlap.

Sweeping a quality threshold and watching each subgroup's share of the
surviving images exposes quality bias: an unbiased estimator keeps the
shares stable, a biased one starves the disadvantaged subgroup. The
distribution overlap quantifies how separated the subgroups live in
quality space (1 = identical, 0 = disjoint).

Run: python3 demos/04_proportions_and_distributions.py
"""

from fqb import proportion_vs_threshold, quality_distributions, serfiq_dataset
from fqb.synthetic import default_config, generate, make_last_layer

config = default_config()
dataset, _ = generate(config)
quality = serfiq_dataset(dataset, make_last_layer(config), m=100, dropout_rate=0.5, seed=42)

curve = proportion_vs_threshold(dataset, quality, "subgroup", num_points=100)
print("share of surviving images as the quality threshold rises:\n")
print("  quantile  remaining  " + "  ".join(f"{label:>6}" for label in curve.labels))
for point in curve.points[::20]:
    shares = "  ".join(f"{point.fractions[label]:6.2f}" for label in curve.labels)
    print(f"  {point.level:>8.2f}  {point.remaining:>9}  {shares}")

summary = quality_distributions(dataset, quality, "subgroup", bins=50)
print(f"\nhistogram overlap clean/noisy: {summary.overlap('clean', 'noisy'):.3f}")
print("a shrinking share plus a small overlap is the signature of quality bias")
