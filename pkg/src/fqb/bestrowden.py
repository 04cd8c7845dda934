"""Comparison-score quality labels and the regressor that predicts them.

The label for an image is the z-score separating its genuine comparison
score from its impostor score distribution,

    z = (s_G - mu_I) / sigma_I,

with s_G the mean of the image's genuine scores and mu_I / sigma_I the mean
and population standard deviation of its impostor scores. A linear ridge
regressor (lambda chosen by seeded k-fold cross-validation) maps embeddings
to these labels so quality can be predicted for unseen images.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import ComparisonSet, Dataset, QualityScores
from .errors import DataError
from .rng import STREAM_CV, stream

SIGMA_FLOOR = 1e-6
SCALE_FLOOR = 1e-12
DEFAULT_LAMBDA_GRID = tuple(10.0 ** k for k in range(-4, 3))


@dataclass
class QualityLabel:
    image_index: int
    image_id: str
    z: float
    genuine_mean: float
    impostor_mean: float
    impostor_std: float  # after flooring at SIGMA_FLOOR


def _scores_by_image(pairs: np.ndarray, scores: np.ndarray, n: int) -> list[np.ndarray]:
    """Group pair scores by image index; both members of a pair get the score."""
    if pairs.size == 0:
        return [np.empty(0)] * n
    idx = np.concatenate([pairs[:, 0], pairs[:, 1]])
    vals = np.concatenate([scores, scores]).astype(np.float64)
    order = np.argsort(idx, kind="stable")
    counts = np.bincount(idx, minlength=n)
    return np.split(vals[order], np.cumsum(counts)[:-1])


def quality_labels(
    dataset: Dataset, scored: ComparisonSet
) -> tuple[list[QualityLabel], list[str]]:
    """Per-image z labels plus the ids of images that could not be labeled.

    An image needs at least one genuine and two impostor comparisons;
    the impostor standard deviation is floored at 1e-6.
    """
    scored.require_scores()
    n = dataset.n_images
    genuine = _scores_by_image(scored.genuine_pairs, scored.genuine_scores, n)
    impostor = _scores_by_image(scored.impostor_pairs, scored.impostor_scores, n)

    labels: list[QualityLabel] = []
    skipped: list[str] = []
    for i, rec in enumerate(dataset.records):
        g, im = genuine[i], impostor[i]
        if g.size < 1 or im.size < 2:
            skipped.append(rec.image_id)
            continue
        s_g = float(g.mean())
        mu = float(im.mean())
        sigma = max(float(im.std()), SIGMA_FLOOR)
        labels.append(
            QualityLabel(
                image_index=i,
                image_id=rec.image_id,
                z=(s_g - mu) / sigma,
                genuine_mean=s_g,
                impostor_mean=mu,
                impostor_std=sigma,
            )
        )
    if not labels:
        raise DataError(
            "no image has at least one genuine and two impostor comparisons"
        )
    return labels, skipped


@dataclass
class RegressorModel:
    """Linear quality regressor in standardized feature space."""

    weights: np.ndarray
    intercept: float
    feature_means: np.ndarray
    feature_scales: np.ndarray
    ridge_lambda: float
    cv_mse: dict[float, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.feature_means = np.asarray(self.feature_means, dtype=np.float64)
        self.feature_scales = np.asarray(self.feature_scales, dtype=np.float64)
        d = self.weights.shape[0]
        if self.weights.ndim != 1 or self.feature_means.shape != (d,) or self.feature_scales.shape != (d,):
            raise ValueError("inconsistent model dimensions")
        if np.any(self.feature_scales <= 0.0):
            raise ValueError("feature scales must be strictly positive")


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    means = x.mean(axis=0)
    scales = np.maximum(x.std(axis=0), SCALE_FLOOR)
    return (x - means) / scales, means, scales


def _ridge_solve(xs: np.ndarray, z: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Minimize mean squared error + lam * ||w||^2 over (w, intercept).

    Per-sample normalization of the data term makes the solution invariant
    under exact duplication of the training set.
    """
    n, d = xs.shape
    intercept = float(z.mean())
    a = xs.T @ xs / n + lam * np.eye(d)
    b = xs.T @ (z - intercept) / n
    return np.linalg.solve(a, b), intercept


def _fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    perm = stream(seed, STREAM_CV).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % folds
    return assignment


def train_regressor(
    embeddings,
    labels,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    folds: int = 5,
    seed: int = 1,
    fold_indices=None,
) -> RegressorModel:
    """Ridge regression with the penalty strength chosen by k-fold CV.

    Features are standardized per training split (scale floor 1e-12 keeps
    constant features harmless). The grid value with the lowest mean
    validation MSE wins, ties going to the larger lambda; the final model is
    refit on all rows. ``fold_indices`` overrides the seeded shuffle with an
    explicit fold id per row.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    z = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or z.shape != (x.shape[0],):
        raise ValueError("embeddings must be (n, d) with one label per row")
    n, d = x.shape
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise DataError(f"need at least {folds} labeled images, got {n}")
    grid = sorted(float(l) for l in lambda_grid)
    if not grid:
        raise ValueError("empty lambda grid")

    if fold_indices is None:
        assignment = _fold_assignment(n, folds, seed)
    else:
        assignment = np.asarray(fold_indices, dtype=np.int64)
        if assignment.shape != (n,) or set(np.unique(assignment)) != set(range(folds)):
            raise ValueError("fold_indices must assign every row to one of the k folds")

    cv_mse: dict[float, float] = {}
    for lam in grid:
        fold_errors = []
        for f in range(folds):
            val = assignment == f
            xs, means, scales = _standardize(x[~val])
            w, b = _ridge_solve(xs, z[~val], lam)
            pred = ((x[val] - means) / scales) @ w + b
            fold_errors.append(float(((pred - z[val]) ** 2).mean()))
        cv_mse[lam] = float(np.mean(fold_errors))

    best = grid[0]
    for lam in grid[1:]:
        if cv_mse[lam] <= cv_mse[best]:
            best = lam

    xs, means, scales = _standardize(x)
    w, b = _ridge_solve(xs, z, best)
    return RegressorModel(
        weights=w,
        intercept=b,
        feature_means=means,
        feature_scales=scales,
        ridge_lambda=best,
        cv_mse=cv_mse,
        metadata={"n_samples": n, "folds": folds, "seed": int(seed)},
    )


def predict(model: RegressorModel, embeddings) -> np.ndarray:
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights.shape[0]:
        raise ValueError(
            f"embeddings have dimension {x.shape[-1] if x.ndim else 0}, "
            f"model expects {model.weights.shape[0]}"
        )
    return ((x - model.feature_means) / model.feature_scales) @ model.weights + model.intercept


def predict_quality(
    model: RegressorModel, dataset: Dataset, estimator_name: str = "bestrowden"
) -> QualityScores:
    """Predicted quality for every dataset image (unbounded real values)."""
    return QualityScores(
        estimator_name=estimator_name,
        values=predict(model, dataset.embeddings),
    )


def fit_from_scores(
    dataset: Dataset,
    scored: ComparisonSet,
    lambda_grid=DEFAULT_LAMBDA_GRID,
    folds: int = 5,
    seed: int = 1,
) -> tuple[RegressorModel, list[str]]:
    """Label the dataset from its comparison scores and fit the regressor."""
    labels, skipped = quality_labels(dataset, scored)
    x = dataset.embeddings[[lab.image_index for lab in labels]]
    z = np.array([lab.z for lab in labels])
    model = train_regressor(x, z, lambda_grid=lambda_grid, folds=folds, seed=seed)
    model.metadata["skipped_images"] = len(skipped)
    return model, skipped


def save_model(path, model: RegressorModel) -> None:
    payload = {
        "weights": [float(v) for v in model.weights],
        "intercept": float(model.intercept),
        "feature_means": [float(v) for v in model.feature_means],
        "feature_scales": [float(v) for v in model.feature_scales],
        "lambda": float(model.ridge_lambda),
        "cv_mse": {repr(k): float(v) for k, v in model.cv_mse.items()},
        "metadata": model.metadata,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path) -> RegressorModel:
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
    except OSError as exc:
        raise DataError(f"cannot open model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return RegressorModel(
            weights=payload["weights"],
            intercept=payload["intercept"],
            feature_means=payload["feature_means"],
            feature_scales=payload["feature_scales"],
            ridge_lambda=payload["lambda"],
            cv_mse={float(k): v for k, v in payload.get("cv_mse", {}).items()},
            metadata=payload.get("metadata", {}),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed model file: {exc}") from exc
