import numpy as np
import pytest

from fqb.dataset import Dataset, SampleRecord


def unit_rows(n, dim, rng):
    rows = rng.standard_normal((n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def dataset_from_rows(rows, embeddings, activations=None):
    """rows: list of (image_id, subject_id, attributes) aligned with embeddings."""
    records = [SampleRecord(i, s, dict(a)) for i, s, a in rows]
    return Dataset.build(records, np.asarray(embeddings), activations)


def random_dataset(n_subjects, images_per_subject, dim=8, seed=0, labeler=None, with_activations=False, act_dim=None):
    """Random unit embeddings; labeler(subject, image) -> attribute dict."""
    rng = np.random.default_rng(seed)
    rows = []
    for s in range(n_subjects):
        for j in range(images_per_subject):
            attrs = labeler(s, j) if labeler else {}
            rows.append((f"s{s:02d}_i{j:02d}", f"s{s:02d}", attrs))
    n = len(rows)
    emb = unit_rows(n, dim, rng)
    act = None
    if with_activations:
        act = rng.standard_normal((n, act_dim or dim))
    return dataset_from_rows(rows, emb, act)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
