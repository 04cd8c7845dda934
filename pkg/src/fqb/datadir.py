"""Canonical layout of a dataset directory.

Every CLI subcommand that takes ``--data DIR`` expects these names::

    metadata.csv        image_id, subject_id and attribute columns
    embeddings.fqbe     N x D float32 matrix (FQBE format)
    activations.fqbe    optional N x H pre-last-layer activations
    last_layer.fqbe     optional H x D last-layer weights
    last_layer.json     sidecar for last_layer.fqbe (bias, activation name)
    truth.csv           optional per-image noise magnitudes (synthetic only)
    synth_config.json   optional generator config (synthetic only)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import Dataset, load_dataset, save_dataset
from .errors import DataError
from .serfiq import LastLayer, load_last_layer, save_last_layer
from .synthetic import SynthConfig, generate, make_last_layer, save_config, save_truth_csv

METADATA = "metadata.csv"
EMBEDDINGS = "embeddings.fqbe"
ACTIVATIONS = "activations.fqbe"
LAYER_MATRIX = "last_layer.fqbe"
LAYER_SIDECAR = "last_layer.json"
TRUTH = "truth.csv"
SYNTH_CONFIG = "synth_config.json"


def load_data_dir(data_dir, need_activations: bool = False) -> Dataset:
    root = Path(data_dir)
    if not root.is_dir():
        raise DataError(f"data directory not found: {root}")
    act_path = root / ACTIVATIONS
    if need_activations and not act_path.exists():
        raise DataError(f"activations matrix not found: {act_path}")
    return load_dataset(
        root / METADATA,
        root / EMBEDDINGS,
        act_path if act_path.exists() else None,
    )


def load_layer(data_dir) -> LastLayer:
    root = Path(data_dir)
    matrix = root / LAYER_MATRIX
    if not matrix.exists():
        raise DataError(f"last-layer matrix not found: {matrix}")
    return load_last_layer(matrix, root / LAYER_SIDECAR)


def write_synthetic_dir(out_dir, config: SynthConfig) -> tuple[Dataset, LastLayer, np.ndarray]:
    """Generate a synthetic dataset and persist the full directory layout."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    dataset, magnitudes = generate(config)
    layer = make_last_layer(config)
    save_dataset(dataset, root / METADATA, root / EMBEDDINGS, root / ACTIVATIONS)
    save_last_layer(layer, root / LAYER_MATRIX, root / LAYER_SIDECAR)
    save_truth_csv(root / TRUTH, dataset, magnitudes)
    save_config(root / SYNTH_CONFIG, config)
    return dataset, layer, magnitudes
