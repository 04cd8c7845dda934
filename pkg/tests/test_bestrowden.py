import numpy as np
import pytest

from conftest import dataset_from_rows, random_dataset, unit_rows
from fqb.bestrowden import (
    DEFAULT_LAMBDA_GRID,
    RegressorModel,
    fit_from_scores,
    load_model,
    predict,
    predict_quality,
    quality_labels,
    save_model,
    train_regressor,
)
from fqb.dataset import ComparisonSet, generate_pairs
from fqb.errors import DataError
from fqb.verification import score_pairs


def labeled_set(genuine, impostor):
    """Two-image dataset where image 0 carries the given comparisons."""
    rng = np.random.default_rng(0)
    n_imp = len(impostor)
    rows = [("probe", "A", {}), ("mate", "A", {})] + [
        (f"imp{k}", f"other{k}", {}) for k in range(n_imp)
    ]
    ds = dataset_from_rows(rows, unit_rows(2 + n_imp, 4, rng))
    cs = ComparisonSet(
        genuine_pairs=[[0, 1]] * len(genuine),
        impostor_pairs=[[0, 2 + k] for k in range(n_imp)],
        genuine_scores=np.array(genuine, dtype=np.float64),
        impostor_scores=np.array(impostor, dtype=np.float64),
    )
    return ds, cs


# ---------------------------------------------------------------------------
# quality labels


def test_label_direct_arithmetic_case():
    ds, cs = labeled_set([0.9], [0.1, 0.3])
    labels, skipped = quality_labels(ds, cs)
    probe = labels[0]
    assert probe.image_id == "probe"
    assert probe.genuine_mean == 0.9
    assert probe.impostor_mean == pytest.approx(0.2, abs=1e-15)
    # population sigma (divide by n), not the sample estimator
    assert probe.impostor_std == pytest.approx(0.1, abs=1e-15)
    assert probe.z == 7.0


def test_label_degenerate_impostor_spread_floored():
    ds, cs = labeled_set([0.9], [0.5, 0.5, 0.5])
    labels, _ = quality_labels(ds, cs)
    probe = labels[0]
    assert probe.impostor_std == 1e-6
    assert probe.z == pytest.approx((0.9 - 0.5) / 1e-6)
    assert probe.z > 0


def test_label_no_separation_is_near_zero():
    eps = 1e-4
    ds, cs = labeled_set([0.5], [0.5 - eps, 0.5 + eps])
    labels, _ = quality_labels(ds, cs)
    assert labels[0].z == pytest.approx(0.0, abs=1e-9)


def test_label_affine_invariance():
    rng = np.random.default_rng(17)
    for _ in range(100):
        n_gen = int(rng.integers(1, 5))
        n_imp = int(rng.integers(2, 20))
        gen = rng.uniform(-1, 1, n_gen)
        imp = rng.uniform(-1, 1, n_imp)
        if float(np.std(imp)) < 1e-3:
            imp[0] += 0.5  # keep sigma clear of the floor
        a = float(rng.uniform(0.2, 3.0))
        b = float(rng.uniform(-2.0, 2.0))
        ds, cs = labeled_set(gen, imp)
        _, cs2 = labeled_set(a * gen + b, a * imp + b)
        z0 = quality_labels(ds, cs)[0][0].z
        z1 = quality_labels(ds, cs2)[0][0].z
        assert z1 == pytest.approx(z0, abs=1e-9)


def test_labels_skip_underdetermined_images_and_report_them():
    # mate has 1 genuine but only 1 impostor comparison -> skipped
    ds, cs = labeled_set([0.9], [0.1, 0.3])
    cs = ComparisonSet(
        genuine_pairs=cs.genuine_pairs,
        impostor_pairs=[[0, 2], [0, 3], [1, 2]],
        genuine_scores=cs.genuine_scores,
        impostor_scores=np.array([0.1, 0.3, 0.2]),
    )
    labels, skipped = quality_labels(ds, cs)
    assert [l.image_id for l in labels] == ["probe"]
    assert set(skipped) == {"mate", "imp0", "imp1"}


def test_labels_error_when_nothing_labelable():
    ds, cs = labeled_set([0.9], [0.1, 0.3])
    unscorable = ComparisonSet(
        genuine_pairs=cs.genuine_pairs,
        impostor_pairs=[[0, 2]],
        genuine_scores=cs.genuine_scores,
        impostor_scores=np.array([0.1]),
    )
    with pytest.raises(DataError, match="no image"):
        quality_labels(ds, unscorable)


# ---------------------------------------------------------------------------
# regressor


def linear_labels(n=200, d=4, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    z = 2.0 * x[:, 0] + 1.0 + noise * rng.standard_normal(n)
    return x, z


def test_regressor_recovers_plain_line():
    x, z = linear_labels()
    model = train_regressor(x, z, lambda_grid=[1e-6], folds=5, seed=1)
    slope = model.weights / model.feature_scales
    assert slope[0] == pytest.approx(2.0, abs=1e-3)
    assert np.abs(slope[1:]).max() < 1e-3


def test_regressor_constant_labels():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((50, 3))
    model = train_regressor(x, np.full(50, 0.7), seed=1)
    assert np.abs(model.weights).max() < 1e-9
    assert model.intercept == pytest.approx(0.7, abs=1e-12)


def test_regressor_duplication_invariance_with_paired_folds():
    x, z = linear_labels(n=60, d=3, seed=5, noise=0.3)
    folds = 5
    assignment = np.arange(60) % folds
    base = train_regressor(x, z, folds=folds, fold_indices=assignment)

    x2 = np.vstack([x, x])
    z2 = np.concatenate([z, z])
    doubled = train_regressor(x2, z2, folds=folds, fold_indices=np.tile(assignment, 2))

    assert doubled.ridge_lambda == base.ridge_lambda
    assert np.abs(doubled.weights - base.weights).max() < 1e-9
    assert doubled.intercept == pytest.approx(base.intercept, abs=1e-9)
    for lam in base.cv_mse:
        assert doubled.cv_mse[lam] == pytest.approx(base.cv_mse[lam], abs=1e-9)


def test_regressor_objective_is_local_minimum():
    x, z = linear_labels(n=80, d=5, seed=3, noise=0.5)
    model = train_regressor(x, z, seed=4)
    xs = (x - model.feature_means) / model.feature_scales
    lam = model.ridge_lambda

    def objective(w):
        resid = xs @ w + model.intercept - z
        return (resid**2).mean() + lam * (w**2).sum()

    best = objective(model.weights)
    rng = np.random.default_rng(9)
    for _ in range(100):
        delta = rng.standard_normal(5)
        delta *= 1e-2 / np.linalg.norm(delta)
        assert objective(model.weights + delta) > best


def test_regressor_cv_selection_matches_direct_evaluation():
    x, z = linear_labels(n=100, d=4, seed=8, noise=1.0)
    folds = 5
    assignment = np.arange(100) % folds
    model = train_regressor(x, z, folds=folds, fold_indices=assignment)

    # independent re-evaluation of every grid point via augmented lstsq
    def cv_mse(lam):
        errs = []
        for f in range(folds):
            tr, va = assignment != f, assignment == f
            mu = x[tr].mean(axis=0)
            sd = np.maximum(x[tr].std(axis=0), 1e-12)
            xs = (x[tr] - mu) / sd
            n = xs.shape[0]
            aug_a = np.vstack([xs, np.sqrt(n * lam) * np.eye(4)])
            aug_b = np.concatenate([z[tr] - z[tr].mean(), np.zeros(4)])
            w, *_ = np.linalg.lstsq(aug_a, aug_b, rcond=None)
            pred = ((x[va] - mu) / sd) @ w + z[tr].mean()
            errs.append(((pred - z[va]) ** 2).mean())
        return float(np.mean(errs))

    direct = {lam: cv_mse(lam) for lam in DEFAULT_LAMBDA_GRID}
    for lam, mse in model.cv_mse.items():
        assert mse == pytest.approx(direct[lam], rel=1e-9)
    best = min(direct.values())
    assert direct[model.ridge_lambda] == pytest.approx(best, rel=1e-12)
    # ties break toward the larger lambda
    candidates = [lam for lam, mse in direct.items() if mse <= best * (1 + 1e-12)]
    assert model.ridge_lambda == max(candidates)


def test_regressor_handles_constant_feature():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((40, 3))
    x[:, 1] = 2.5
    z = x[:, 0]
    model = train_regressor(x, z, lambda_grid=[1e-4], seed=1)
    assert np.isfinite(model.weights).all()
    assert model.feature_scales[1] == 1e-12


def test_regressor_requires_enough_samples():
    x, z = linear_labels(n=4)
    with pytest.raises(DataError, match="at least 5"):
        train_regressor(x, z, folds=5)


# ---------------------------------------------------------------------------
# prediction


def test_predict_zero_weight_model():
    model = RegressorModel(
        weights=np.zeros(3),
        intercept=0.3,
        feature_means=np.zeros(3),
        feature_scales=np.ones(3),
        ridge_lambda=1.0,
    )
    ds = random_dataset(2, 2, dim=3, seed=1)
    q = predict_quality(model, ds)
    assert np.array_equal(q.values, np.full(4, 0.3))
    assert q.estimator_name == "bestrowden"


def test_predict_fitted_values_match_least_squares():
    x, z = linear_labels(n=500, d=8, seed=6, noise=0.05)
    model = train_regressor(x, z, lambda_grid=[1e-12], seed=2)
    fitted = predict(model, x)
    ones = np.c_[np.ones(500), x]
    beta, *_ = np.linalg.lstsq(ones, z, rcond=None)
    assert np.abs(fitted - ones @ beta).max() < 1e-6


def test_predict_held_out_point_on_the_line():
    x, z = linear_labels(n=300, d=4, seed=7)
    model = train_regressor(x, z, lambda_grid=[1e-8], seed=3)
    point = np.zeros((1, 4))
    point[0, 0] = 0.25
    assert predict(model, point)[0] == pytest.approx(1.5, abs=1e-2)


def test_predict_dimension_mismatch():
    x, z = linear_labels(n=50, d=4)
    model = train_regressor(x, z, lambda_grid=[1e-4])
    with pytest.raises(ValueError, match="dimension"):
        predict(model, np.zeros((2, 5)))


def test_model_json_round_trip(tmp_path):
    x, z = linear_labels(n=50, d=4, noise=0.1)
    model = train_regressor(x, z, seed=5)
    path = tmp_path / "model.json"
    save_model(path, model)
    back = load_model(path)
    assert np.array_equal(back.weights, model.weights)
    assert back.intercept == model.intercept
    assert np.array_equal(back.feature_means, model.feature_means)
    assert np.array_equal(back.feature_scales, model.feature_scales)
    assert back.ridge_lambda == model.ridge_lambda
    assert back.cv_mse == model.cv_mse


def test_fit_from_scores_end_to_end():
    ds = random_dataset(10, 3, dim=6, seed=13)
    scored = score_pairs(ds, generate_pairs(ds, 20, seed=1))
    model, skipped = fit_from_scores(ds, scored, seed=1)
    assert skipped == []
    q = predict_quality(model, ds)
    assert q.values.shape == (30,)
    assert np.isfinite(q.values).all()
