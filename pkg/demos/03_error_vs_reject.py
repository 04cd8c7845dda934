#!/usr/bin/env python3
"""Error-vs-reject curves: does discarding low-quality images reduce error?

A useful quality estimator drives FNMR down as the lowest-quality images are
unconsidered; a random estimator leaves it flat. The decision threshold stays
fixed at the full-set operating point while images are rejected.

Run: python3 demos/03_error_vs_reject.py
"""

import numpy as np

from fqb import QualityScores, error_vs_reject, generate_pairs, score_pairs, serfiq_dataset
from fqb.synthetic import default_config, generate, make_last_layer

config = default_config()
dataset, _ = generate(config)
scored = score_pairs(dataset, generate_pairs(dataset, 1000, seed=42))

estimators = {
    "stochastic-embedding": serfiq_dataset(
        dataset, make_last_layer(config), m=100, dropout_rate=0.5, seed=42
    ),
    "random baseline": QualityScores(
        "random", np.random.default_rng(0).uniform(size=dataset.n_images)
    ),
}

grid = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
print(f"FNMR at FMR 1% while rejecting the lowest-quality fraction {grid}:\n")
for name, quality in estimators.items():
    curve = error_vs_reject(scored, quality, fmr_target=0.01, grid=grid)
    cells = "  ".join(
        "  --  " if p.fnmr is None else f"{100 * p.fnmr:5.2f}%" for p in curve.points
    )
    print(f"  {name:<22} {cells}")
print("\na good estimator rejects exactly the images that cause false non-matches")
