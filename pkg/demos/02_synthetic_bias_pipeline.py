#!/usr/bin/env python3
"""End-to-end bias study on a synthetic dataset with known ground truth.

Two subgroups share everything except the intra-class noise level, so the
"noisy" one is harder to verify by construction. The demo checks that the
verification error is biased and that the quality estimator absorbs that
bias, assigning the disadvantaged subgroup lower scores.

Run: python3 demos/02_synthetic_bias_pipeline.py
"""

import numpy as np

from fqb import generate_pairs, score_pairs, serfiq_dataset, subgroup_fnmr_table
from fqb.synthetic import default_config, generate, make_last_layer
from fqb.verification import render_table

config = default_config()  # clean: noise 0.1, noisy: noise 0.3, 20 subjects x 4 images each
dataset, noise_magnitudes = generate(config)
layer = make_last_layer(config)
print(f"dataset: {dataset.n_images} images, embedding dim {dataset.dim}")

# 1. verification error per subgroup at fixed FMR targets
scored = score_pairs(dataset, generate_pairs(dataset, impostor_cap_per_probe=1000, seed=42))
report = subgroup_fnmr_table(dataset, scored, "subgroup", [0.001, 0.01])
print("\nFNMR at FMR 0.1% / 1% (match rule: score >= threshold):")
print(render_table(report))

# 2. quality estimation from the same embedding space
quality = serfiq_dataset(dataset, layer, m=100, dropout_rate=0.5, seed=42)
labels = np.asarray(dataset.attribute_labels("subgroup"))
print("\nmedian quality per subgroup:")
for label in ("clean", "noisy"):
    print(f"  {label}: {np.median(quality.values[labels == label]):.3f}")

# 3. the coupling: per-image quality against the injected noise magnitude
order = np.argsort(noise_magnitudes)
lo, hi = order[: len(order) // 4], order[-len(order) // 4 :]
print(
    f"\nmean quality of the least-noisy quartile: {quality.values[lo].mean():.3f}; "
    f"most-noisy quartile: {quality.values[hi].mean():.3f}"
)
print("the subgroup with the higher verification error also receives lower quality")
