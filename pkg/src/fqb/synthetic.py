"""Synthetic embedding datasets with controllable subgroup bias.

Each subject gets a class-mean direction drawn uniformly on the unit
hypersphere; each image is the mean plus isotropic Gaussian noise, rescaled
to unit norm. The per-image activation vector has unit direction scaled by
(1 + realized noise magnitude), so dropout-induced embedding spread, and with
it the stochastic-embedding quality score, degrades exactly where the
verification error does. That known coupling is the ground truth the
analyses are tested against.

All draws come from the Philox streams documented in :mod:`fqb.rng`;
identical configs give identical datasets on every platform that ships
numpy's Philox + ziggurat normal sampler.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, SampleRecord
from .errors import DataError
from .rng import STREAM_DATA, STREAM_LAYER, stream
from .serfiq import LastLayer

DEFAULT_ATTRIBUTE = "subgroup"


@dataclass
class SubgroupSpec:
    label: str
    subjects: int
    images_per_subject: int
    noise_scale: float


@dataclass
class SynthConfig:
    dim: int = 32
    activation_dim: int = 64
    subgroups: list[SubgroupSpec] = field(default_factory=list)
    seed: int = 42
    attribute: str = DEFAULT_ATTRIBUTE

    def validate(self) -> None:
        if self.dim < 1 or self.activation_dim < 1:
            raise DataError("embedding and activation dimensions must be >= 1")
        if not self.subgroups:
            raise DataError("config needs at least one subgroup")
        labels = [sg.label for sg in self.subgroups]
        if len(set(labels)) != len(labels) or any(not l for l in labels):
            raise DataError("subgroup labels must be non-empty and unique")
        for sg in self.subgroups:
            if sg.subjects < 1 or sg.images_per_subject < 1:
                raise DataError(f"subgroup {sg.label!r}: counts must be >= 1")
            if sg.noise_scale < 0.0:
                raise DataError(f"subgroup {sg.label!r}: noise_scale must be >= 0")
        if not self.attribute:
            raise DataError("attribute name must be non-empty")


def default_config() -> SynthConfig:
    """Two-subgroup reference config: clean (noise 0.1) vs noisy (noise 0.3)."""
    return SynthConfig(
        dim=32,
        activation_dim=64,
        subgroups=[
            SubgroupSpec("clean", subjects=20, images_per_subject=4, noise_scale=0.1),
            SubgroupSpec("noisy", subjects=20, images_per_subject=4, noise_scale=0.3),
        ],
        seed=42,
    )


def load_config(path) -> SynthConfig:
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as exc:
        raise DataError(f"cannot open config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    try:
        config = SynthConfig(
            dim=int(raw["dim"]),
            activation_dim=int(raw["activation_dim"]),
            subgroups=[
                SubgroupSpec(
                    label=str(sg["label"]),
                    subjects=int(sg["subjects"]),
                    images_per_subject=int(sg["images_per_subject"]),
                    noise_scale=float(sg["noise_scale"]),
                )
                for sg in raw["subgroups"]
            ],
            seed=int(raw.get("seed", 42)),
            attribute=str(raw.get("attribute", DEFAULT_ATTRIBUTE)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed config: {exc}") from exc
    config.validate()
    return config


def save_config(path, config: SynthConfig) -> None:
    payload = {
        "dim": config.dim,
        "activation_dim": config.activation_dim,
        "seed": config.seed,
        "attribute": config.attribute,
        "subgroups": [
            {
                "label": sg.label,
                "subjects": sg.subjects,
                "images_per_subject": sg.images_per_subject,
                "noise_scale": sg.noise_scale,
            }
            for sg in config.subgroups
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def generate(config: SynthConfig) -> tuple[Dataset, np.ndarray]:
    """Generate a dataset plus the per-image realized noise magnitudes.

    The Gaussian noise draw happens for every image regardless of its
    subgroup's noise_scale, so configs differing only in a noise_scale see
    the same noise directions, merely rescaled.
    """
    config.validate()
    rng = stream(config.seed, STREAM_DATA)

    records: list[SampleRecord] = []
    embeddings = []
    activations = []
    magnitudes = []
    for sg in config.subgroups:
        for s in range(sg.subjects):
            subject_id = f"{sg.label}_s{s:03d}"
            mean = rng.standard_normal(config.dim)
            mean /= np.linalg.norm(mean)
            for j in range(sg.images_per_subject):
                noise = sg.noise_scale * rng.standard_normal(config.dim)
                magnitude = float(np.linalg.norm(noise))
                direction = rng.standard_normal(config.activation_dim)
                direction /= np.linalg.norm(direction)

                records.append(
                    SampleRecord(
                        image_id=f"{subject_id}_i{j:02d}",
                        subject_id=subject_id,
                        attributes={config.attribute: sg.label},
                    )
                )
                embeddings.append(mean + noise)
                activations.append((1.0 + magnitude) * direction)
                magnitudes.append(magnitude)

    dataset = Dataset.build(records, np.asarray(embeddings), np.asarray(activations))
    return dataset, np.asarray(magnitudes)


def make_last_layer(config: SynthConfig) -> LastLayer:
    """Identity-activation layer with orthonormal columns (seeded QR)."""
    config.validate()
    h, d = config.activation_dim, config.dim
    if h < d:
        raise DataError(
            f"activation_dim ({h}) must be >= dim ({d}) for orthonormal columns"
        )
    gauss = stream(config.seed, STREAM_LAYER).standard_normal((h, d))
    q, r = np.linalg.qr(gauss)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return LastLayer(weights=q * signs, bias=None, activation="identity")


def save_truth_csv(path, dataset: Dataset, magnitudes) -> None:
    magnitudes = np.asarray(magnitudes, dtype=np.float64)
    if magnitudes.shape != (dataset.n_images,):
        raise DataError("noise magnitudes must align with dataset rows")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["image_id", "noise_magnitude"])
        for rec, mag in zip(dataset.records, magnitudes):
            writer.writerow([rec.image_id, repr(float(mag))])


def load_truth_csv(path, dataset: Dataset) -> np.ndarray:
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open truth file {path}: {exc}") from exc
    by_id: dict[str, float] = {}
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["image_id", "noise_magnitude"]:
            raise DataError(f"{path}: truth CSV header must be image_id,noise_magnitude")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, found {len(row)}")
            if row[0] in by_id:
                raise DataError(f"{path}:{lineno}: duplicate image_id {row[0]!r}")
            try:
                by_id[row[0]] = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: unparsable magnitude {row[1]!r}") from exc
    try:
        return np.array([by_id[rec.image_id] for rec in dataset.records])
    except KeyError as exc:
        raise DataError(f"{path}: missing noise magnitude for image {exc.args[0]!r}") from exc
