"""Stochastic-embedding robustness quality.

An image's quality is read off the spread of embeddings produced by random
dropout subnetworks of the recognition model's last layer: tight agreement
between the stochastic embeddings means a robust representation and a high
quality score. No network is run here; the caller supplies the pre-last-layer
activation vector and the last layer's weights.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, QualityScores, read_matrix, write_matrix
from .errors import DataError
from .rng import image_seed, stream

ACTIVATIONS = ("identity", "tanh")


def sigmoid(t: float) -> float:
    """Overflow-safe logistic function 1 / (1 + e^-t)."""
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@dataclass
class LastLayer:
    """Final dense layer: H x D weights, optional length-D bias, activation."""

    weights: np.ndarray
    bias: np.ndarray | None = None
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or min(self.weights.shape) < 1:
            raise ValueError("layer weights must be a non-empty H x D matrix")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("layer weights contain non-finite values")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weights.shape[1],):
                raise ValueError("bias length must equal the layer output dimension")
            if not np.all(np.isfinite(self.bias)):
                raise ValueError("layer bias contains non-finite values")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def input_dim(self) -> int:
        return int(self.weights.shape[0])

    @property
    def output_dim(self) -> int:
        return int(self.weights.shape[1])

    def apply_activation(self, pre: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return np.tanh(pre)
        return pre


def save_last_layer(layer: LastLayer, matrix_path, sidecar_path) -> None:
    """Persist as an FQBE float32 matrix plus a JSON sidecar."""
    write_matrix(matrix_path, layer.weights)
    sidecar = {
        "activation": layer.activation,
        "bias": None if layer.bias is None else [float(v) for v in layer.bias],
    }
    with open(sidecar_path, "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_last_layer(matrix_path, sidecar_path) -> LastLayer:
    weights = read_matrix(matrix_path)
    try:
        with open(sidecar_path, encoding="utf-8") as f:
            sidecar = json.load(f)
    except OSError as exc:
        raise DataError(f"cannot open layer sidecar {sidecar_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{sidecar_path}: invalid JSON: {exc}") from exc
    bias = sidecar.get("bias")
    try:
        return LastLayer(
            weights=weights,
            bias=None if bias is None else np.asarray(bias, dtype=np.float64),
            activation=sidecar.get("activation", "identity"),
        )
    except ValueError as exc:
        raise DataError(f"{sidecar_path}: {exc}") from exc


def stochastic_embeddings(
    activation_vec,
    layer: LastLayer,
    m: int,
    dropout_rate: float,
    seed: int,
) -> np.ndarray:
    """m forward passes through the last layer under random dropout masks.

    Pass i keeps each of the H input activations with probability
    (1 - dropout_rate) and applies inverted scaling, so

        x_i = act( W^T (a * mask_i) / (1 - dropout_rate) + bias ).

    Masks come from one ``stream(seed).random((m, H))`` draw (row-major),
    keeping entry (i, h) where the uniform is < 1 - dropout_rate.
    """
    a = np.asarray(activation_vec, dtype=np.float64)
    if a.shape != (layer.input_dim,):
        raise ValueError(
            f"activation vector has shape {a.shape}, layer expects ({layer.input_dim},)"
        )
    if m < 2:
        raise ValueError("need m >= 2 stochastic embeddings")
    if not 0.0 < dropout_rate < 1.0:
        raise ValueError(f"dropout_rate must be in (0, 1), got {dropout_rate}")

    keep = 1.0 - dropout_rate
    masks = stream(seed).random((m, layer.input_dim)) < keep
    pre = (a * masks) @ layer.weights / keep
    if layer.bias is not None:
        pre = pre + layer.bias
    return layer.apply_activation(pre)


def serfiq_quality(embeddings) -> float:
    """Quality in (0, 1] from the spread of one image's stochastic embeddings.

    q = 2 * sigmoid( -(2 / m^2) * sum_{i<j} ||x_i - x_j|| )

    All embeddings coinciding gives q = 1; q strictly decreases in every
    pairwise Euclidean distance.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an (m >= 2) x D matrix of stochastic embeddings")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite stochastic embeddings")
    m = x.shape[0]
    dists = np.concatenate(
        [np.sqrt(((x[i + 1 :] - x[i]) ** 2).sum(axis=1)) for i in range(m - 1)]
    )
    # summing in sorted order makes the score exactly permutation-invariant
    total = float(np.sort(dists).sum())
    return 2.0 * sigmoid(-(2.0 / (m * m)) * total)


def thread_budget() -> int:
    """Worker cap from FQB_THREADS (0 or unset: automatic)."""
    raw = os.environ.get("FQB_THREADS", "0")
    try:
        n = int(raw)
    except ValueError as exc:
        raise DataError(f"FQB_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise DataError(f"FQB_THREADS must be >= 0, got {n}")
    if n == 0:
        return min(4, os.cpu_count() or 1)
    return n


def serfiq_dataset(
    dataset: Dataset,
    layer: LastLayer,
    m: int = 100,
    dropout_rate: float = 0.5,
    seed: int = 1,
    normalize: bool = False,
    threads: int | None = None,
) -> QualityScores:
    """Stochastic-embedding quality for every image of a dataset.

    Each image draws its dropout masks from a stream keyed by (seed,
    image_id), so scores do not depend on row order or on how the work is
    scheduled across threads. ``normalize`` rescales each stochastic
    embedding to unit norm before the distance computation (off by default;
    distances are taken on the raw layer outputs).
    """
    if dataset.activations is None:
        raise DataError("dataset has no activations matrix (required for stochastic-embedding quality)")
    if dataset.activations.shape[1] != layer.input_dim:
        raise DataError(
            f"activations have dimension {dataset.activations.shape[1]}, "
            f"layer expects {layer.input_dim}"
        )

    def quality_of(i: int) -> float:
        sub = image_seed(seed, dataset.records[i].image_id)
        x = stochastic_embeddings(dataset.activations[i], layer, m, dropout_rate, sub)
        if normalize:
            norms = np.linalg.norm(x, axis=1, keepdims=True)
            x = np.divide(x, norms, out=x.copy(), where=norms > 0.0)
        return serfiq_quality(x)

    n = dataset.n_images
    workers = thread_budget() if threads is None else max(1, threads)
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(quality_of, range(n)))
    else:
        values = [quality_of(i) for i in range(n)]
    return QualityScores(estimator_name="serfiq", values=np.asarray(values))
