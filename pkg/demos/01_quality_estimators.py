#!/usr/bin/env python3
"""Walk through the two matcher-adaptive quality estimators on toy inputs.

Run: python3 demos/01_quality_estimators.py
"""

import numpy as np

from fqb import ComparisonSet, Dataset, LastLayer, SampleRecord
from fqb.bestrowden import quality_labels
from fqb.serfiq import serfiq_quality, stochastic_embeddings

# ---------------------------------------------------------------------------
# Stochastic-embedding quality: robust representations score high
# ---------------------------------------------------------------------------
# The estimator feeds one activation vector through the network's last layer
# under m random dropout masks and reads quality off the spread of the
# resulting embeddings: tight agreement -> high quality.

rng = np.random.default_rng(0)
layer = LastLayer(weights=rng.standard_normal((16, 8)) / 4.0)

print("== stochastic-embedding quality ==")
for scale in (0.5, 1.0, 2.0, 4.0):
    activations = scale * rng.standard_normal(16)
    embeddings = stochastic_embeddings(activations, layer, m=100, dropout_rate=0.5, seed=7)
    q = serfiq_quality(embeddings)
    print(f"  activation scale {scale:>3}: quality {q:.4f}")
print("  larger activations -> larger dropout spread -> lower quality\n")

# Degenerate case: all stochastic embeddings coincide, quality is exactly 1.
identical = np.tile([0.1, 0.2, 0.3], (10, 1))
print(f"  coinciding embeddings: quality {serfiq_quality(identical)}\n")

# ---------------------------------------------------------------------------
# Comparison-score labels: separation from the impostor distribution
# ---------------------------------------------------------------------------
# An image that matches its mate well (high genuine score) while staying far
# from other identities (low impostor scores) earns a high z label.

records = [SampleRecord("probe", "alice"), SampleRecord("mate", "alice")] + [
    SampleRecord(f"other{k}", f"person{k}") for k in range(4)
]
emb = rng.standard_normal((6, 8))
emb /= np.linalg.norm(emb, axis=1, keepdims=True)
dataset = Dataset.build(records, emb)

print("== comparison-score quality labels ==")
for genuine_score in (0.9, 0.5, 0.25):
    scored = ComparisonSet(
        genuine_pairs=[[0, 1]],
        impostor_pairs=[[0, 2], [0, 3], [0, 4], [0, 5]],
        genuine_scores=np.array([genuine_score]),
        impostor_scores=np.array([0.1, 0.3, 0.2, 0.2]),
    )
    labels, _ = quality_labels(dataset, scored)
    lab = labels[0]
    print(
        f"  genuine {genuine_score:.2f} vs impostors (mu {lab.impostor_mean:.2f}, "
        f"sigma {lab.impostor_std:.3f}) -> z = {lab.z:+.2f}"
    )
print("  the label is the z-score of the genuine score under the impostor distribution")
