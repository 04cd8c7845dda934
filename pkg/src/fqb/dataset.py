"""Embedding datasets and their on-disk formats.

File formats owned by this module:

FQBE matrix (binary, bit-exact)
    magic ``b"FQBE"``, little-endian u32 version (=1), u64 rows, u64 cols,
    then rows*cols float32 values, little-endian, row-major. No padding,
    no trailing bytes.

metadata CSV (UTF-8)
    required columns ``image_id`` and ``subject_id``; every additional column
    is a categorical attribute (e.g. pose, ethnicity, age_class). An empty
    cell means the attribute is absent for that image.

quality CSV
    header ``image_id,score``; one decimal float per image.

pairs CSV
    header ``kind,probe,reference,score`` with kind in {genuine, impostor};
    probe/reference are image ids; score may be empty when unscored.

Embeddings are L2-normalized at load: rows whose norm deviates from 1 by more
than 1e-5 are rescaled (float64 arithmetic, stored as float32). Rows already
within tolerance are kept bit-exact, which makes save/load round-trips stable.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DataError
from .rng import STREAM_PAIRS, stream

_MAGIC = b"FQBE"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

NORM_TOLERANCE = 1e-5


@dataclass(frozen=True)
class SampleRecord:
    """One image: unique id, subject id, and categorical attribute labels."""

    image_id: str
    subject_id: str
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass
class QualityScores:
    """Per-image scalar quality from a named estimator, dataset-order aligned."""

    estimator_name: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("quality values must be a 1-D vector")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"quality scores for {self.estimator_name!r} contain non-finite values")


@dataclass
class ComparisonSet:
    """Genuine and impostor index pairs, plus per-pair scores once scored.

    Pairs are (probe_index, reference_index) rows. Scores produced by the
    pipeline are float32; the arrays are kept as assigned so tests may feed
    exact float64 values.
    """

    genuine_pairs: np.ndarray
    impostor_pairs: np.ndarray
    genuine_scores: np.ndarray | None = None
    impostor_scores: np.ndarray | None = None

    def __post_init__(self):
        self.genuine_pairs = _as_pair_array(self.genuine_pairs)
        self.impostor_pairs = _as_pair_array(self.impostor_pairs)

    @property
    def is_scored(self) -> bool:
        return self.genuine_scores is not None and self.impostor_scores is not None

    def require_scores(self) -> None:
        if not self.is_scored:
            raise DataError("comparison set has no scores; run score_pairs first")


def _as_pair_array(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be an (n, 2) index array")
    return arr


@dataclass
class Dataset:
    """Index-aligned records, unit-norm embeddings, optional activations."""

    records: list[SampleRecord]
    embeddings: np.ndarray
    activations: np.ndarray | None = None

    @classmethod
    def build(cls, records, embeddings, activations=None) -> "Dataset":
        """Validate alignment and normalize embedding rows.

        This is the single construction path used by both the loader and the
        synthetic generator, so every Dataset in the system satisfies the same
        invariants.
        """
        records = list(records)
        seen: set[str] = set()
        for rec in records:
            if not rec.image_id:
                raise DataError("empty image_id in metadata")
            if rec.image_id in seen:
                raise DataError(f"duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)
            if not rec.subject_id:
                raise DataError(f"image {rec.image_id!r} has an empty subject_id")
            for name, label in rec.attributes.items():
                if not name or not label:
                    raise DataError(f"image {rec.image_id!r}: empty attribute name or label")

        emb = _check_matrix(embeddings, len(records), "embeddings")
        emb = _normalize_rows(emb, records)
        act = None
        if activations is not None:
            act = _check_matrix(activations, len(records), "activations")
        return cls(records=records, embeddings=emb, activations=act)

    @property
    def n_images(self) -> int:
        return len(self.records)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def index_by_id(self) -> dict[str, int]:
        return {rec.image_id: i for i, rec in enumerate(self.records)}

    def attribute_names(self) -> list[str]:
        names: set[str] = set()
        for rec in self.records:
            names.update(rec.attributes)
        return sorted(names)

    def attribute_labels(self, attribute: str) -> list[str]:
        """Per-image labels for one attribute; every image must carry it."""
        labels = []
        for rec in self.records:
            label = rec.attributes.get(attribute)
            if label is None:
                raise DataError(
                    f"attribute {attribute!r} missing for image {rec.image_id!r}"
                )
            labels.append(label)
        return labels

    def labels_present(self, attribute: str) -> list[str]:
        return sorted(set(self.attribute_labels(attribute)))


def _check_matrix(values, n_rows: int, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise DataError(f"{what} must be a 2-D matrix, got shape {arr.shape}")
    if arr.shape[0] != n_rows:
        raise DataError(
            f"row-count mismatch: {n_rows} metadata rows but {arr.shape[0]} {what} rows"
        )
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{what} contain non-finite values")
    return arr.astype(np.float32, copy=False)


def _normalize_rows(emb: np.ndarray, records) -> np.ndarray:
    wide = emb.astype(np.float64)
    norms = np.linalg.norm(wide, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise DataError(f"zero-norm embedding row for image {records[zero[0]].image_id!r}")
    out = emb.copy()
    off = np.abs(norms - 1.0) > NORM_TOLERANCE
    if np.any(off):
        out[off] = (wide[off] / norms[off, None]).astype(np.float32)
    return out


# ---------------------------------------------------------------------------
# FQBE binary matrices


def read_matrix(path) -> np.ndarray:
    """Read an FQBE file into a float32 (rows, cols) array."""
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise DataError(f"cannot open matrix file {path}: {exc}") from exc
    with f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DataError(f"{path}: truncated FQBE header")
        magic, version, rows, cols = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise DataError(f"{path}: not an FQBE matrix file (bad magic)")
        if version != _VERSION:
            raise DataError(f"{path}: unsupported FQBE version {version}")
        data = np.fromfile(f, dtype="<f4")
    if data.size != rows * cols:
        raise DataError(
            f"{path}: payload holds {data.size} float32 values, header says {rows}x{cols}"
        )
    return data.astype(np.float32, copy=False).reshape(rows, cols)


def write_matrix(path, matrix) -> None:
    arr = np.ascontiguousarray(np.asarray(matrix, dtype=np.float32))
    if arr.ndim != 2:
        raise ValueError("FQBE stores 2-D matrices")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, _VERSION, arr.shape[0], arr.shape[1]))
        f.write(arr.astype("<f4", copy=False).tobytes(order="C"))


# ---------------------------------------------------------------------------
# metadata CSV


def read_metadata(path) -> list[SampleRecord]:
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open metadata file {path}: {exc}") from exc
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty metadata file")
        if "image_id" not in header or "subject_id" not in header:
            raise DataError(f"{path}: header must contain image_id and subject_id columns")
        if len(set(header)) != len(header) or any(not c for c in header):
            raise DataError(f"{path}: duplicate or empty column names in header")
        attr_cols = [c for c in header if c not in ("image_id", "subject_id")]
        id_col = header.index("image_id")
        subj_col = header.index("subject_id")

        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
                )
            cells = dict(zip(header, row))
            attributes = {c: cells[c] for c in attr_cols if cells[c] != ""}
            records.append(
                SampleRecord(
                    image_id=row[id_col],
                    subject_id=row[subj_col],
                    attributes=attributes,
                )
            )
    return records


def write_metadata(path, records) -> None:
    attr_cols: set[str] = set()
    for rec in records:
        attr_cols.update(rec.attributes)
    columns = ["image_id", "subject_id"] + sorted(attr_cols)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for rec in records:
            writer.writerow(
                [rec.image_id, rec.subject_id]
                + [rec.attributes.get(c, "") for c in columns[2:]]
            )


# ---------------------------------------------------------------------------
# datasets


def load_dataset(meta_path, emb_path, act_path=None) -> Dataset:
    """Load metadata + embedding matrix (+ optional activations) into a Dataset.

    Record order equals metadata row order; embeddings are L2-normalized.
    """
    records = read_metadata(meta_path)
    embeddings = read_matrix(emb_path)
    activations = read_matrix(act_path) if act_path is not None else None
    return Dataset.build(records, embeddings, activations)


def save_dataset(dataset: Dataset, meta_path, emb_path, act_path=None) -> None:
    write_metadata(meta_path, dataset.records)
    write_matrix(emb_path, dataset.embeddings)
    if act_path is not None:
        if dataset.activations is None:
            raise DataError("dataset has no activations to save")
        write_matrix(act_path, dataset.activations)


# ---------------------------------------------------------------------------
# quality CSV


def load_quality_csv(path, dataset: Dataset, estimator_name: str) -> QualityScores:
    """Read an image_id,score file and align it to dataset order.

    Every dataset image must appear exactly once; ids unknown to the dataset
    are ignored so one score file may serve nested datasets.
    """
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open quality file {path}: {exc}") from exc
    scores: dict[str, float] = {}
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["image_id", "score"]:
            raise DataError(f"{path}: quality CSV header must be image_id,score")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, found {len(row)}")
            image_id, text = row
            if image_id in scores:
                raise DataError(f"{path}:{lineno}: duplicate image_id {image_id!r}")
            try:
                value = float(text)
            except ValueError as exc:
                raise DataError(
                    f"{path}:{lineno}: unparsable score {text!r} for image {image_id!r}"
                ) from exc
            if not np.isfinite(value):
                raise DataError(f"{path}:{lineno}: non-finite score for image {image_id!r}")
            scores[image_id] = value

    values = np.empty(dataset.n_images, dtype=np.float64)
    for i, rec in enumerate(dataset.records):
        if rec.image_id not in scores:
            raise DataError(f"{path}: missing score for image {rec.image_id!r}")
        values[i] = scores[rec.image_id]
    return QualityScores(estimator_name=estimator_name, values=values)


def save_quality_csv(path, dataset: Dataset, quality: QualityScores) -> None:
    if len(quality.values) != dataset.n_images:
        raise DataError("quality vector length does not match dataset size")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["image_id", "score"])
        for rec, value in zip(dataset.records, quality.values):
            writer.writerow([rec.image_id, repr(float(value))])


# ---------------------------------------------------------------------------
# comparison pairs


def generate_pairs(dataset: Dataset, impostor_cap_per_probe: int = 1000, seed: int = 1) -> ComparisonSet:
    """Build genuine and (capped, seeded) impostor comparison pairs.

    Genuine pairs are all unordered within-subject pairs. Impostor pairs are
    drawn per probe: up to ``impostor_cap_per_probe`` images of other subjects,
    sampled without replacement from the stream ``(seed, STREAM_PAIRS, probe)``
    via ``Generator.choice``. Unordered duplicates are dropped afterwards,
    keeping the first occurrence in probe order. The result is a pure function
    of (dataset, cap, seed).
    """
    if impostor_cap_per_probe < 1:
        raise ValueError("impostor_cap_per_probe must be a positive integer")

    groups: dict[str, list[int]] = {}
    for i, rec in enumerate(dataset.records):
        groups.setdefault(rec.subject_id, []).append(i)

    genuine = [
        pair for idxs in groups.values() for pair in combinations(idxs, 2)
    ]
    if not genuine:
        raise DataError("no genuine pairs possible: every subject has a single image")
    if len(groups) < 2:
        raise DataError("no impostor pairs possible: dataset has a single subject")

    subject_code = np.empty(dataset.n_images, dtype=np.int64)
    for code, idxs in enumerate(groups.values()):
        subject_code[idxs] = code

    impostor: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    for probe in range(dataset.n_images):
        others = np.flatnonzero(subject_code != subject_code[probe])
        k = min(impostor_cap_per_probe, others.size)
        picks = stream(seed, STREAM_PAIRS, probe).choice(others, size=k, replace=False)
        for ref in picks:
            key = (probe, int(ref)) if probe < ref else (int(ref), probe)
            if key not in seen:
                seen.add(key)
                impostor.append((probe, int(ref)))

    return ComparisonSet(
        genuine_pairs=np.array(genuine, dtype=np.int64),
        impostor_pairs=np.array(impostor, dtype=np.int64),
    )


def save_pairs_csv(path, dataset: Dataset, pairs: ComparisonSet) -> None:
    ids = [rec.image_id for rec in dataset.records]

    def rows(kind, index_pairs, scores):
        for n, (p, r) in enumerate(index_pairs):
            score = "" if scores is None else repr(float(scores[n]))
            yield [kind, ids[p], ids[r], score]

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["kind", "probe", "reference", "score"])
        writer.writerows(rows("genuine", pairs.genuine_pairs, pairs.genuine_scores))
        writer.writerows(rows("impostor", pairs.impostor_pairs, pairs.impostor_scores))


def load_pairs_csv(path, dataset: Dataset) -> ComparisonSet:
    index = dataset.index_by_id()
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open pairs file {path}: {exc}") from exc

    pair_lists: dict[str, list[tuple[int, int]]] = {"genuine": [], "impostor": []}
    score_lists: dict[str, list[float]] = {"genuine": [], "impostor": []}
    unscored = 0
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["kind", "probe", "reference", "score"]:
            raise DataError(f"{path}: pairs CSV header must be kind,probe,reference,score")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, found {len(row)}")
            kind, probe_id, ref_id, text = row
            if kind not in pair_lists:
                raise DataError(f"{path}:{lineno}: unknown pair kind {kind!r}")
            try:
                pair = (index[probe_id], index[ref_id])
            except KeyError as exc:
                raise DataError(
                    f"{path}:{lineno}: image id {exc.args[0]!r} not in dataset"
                ) from exc
            pair_lists[kind].append(pair)
            if text == "":
                unscored += 1
            else:
                try:
                    score_lists[kind].append(float(text))
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: unparsable score {text!r}") from exc

    n_pairs = len(pair_lists["genuine"]) + len(pair_lists["impostor"])
    if 0 < unscored < n_pairs:
        raise DataError(f"{path}: mixes scored and unscored pairs")
    scored = unscored == 0 and n_pairs > 0
    return ComparisonSet(
        genuine_pairs=np.array(pair_lists["genuine"], dtype=np.int64).reshape(-1, 2),
        impostor_pairs=np.array(pair_lists["impostor"], dtype=np.int64).reshape(-1, 2),
        genuine_scores=np.array(score_lists["genuine"], dtype=np.float32) if scored else None,
        impostor_scores=np.array(score_lists["impostor"], dtype=np.float32) if scored else None,
    )
