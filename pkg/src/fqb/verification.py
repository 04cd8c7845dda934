"""Verification error metrics: similarity scores, FMR thresholds, FNMR tables.

Match rule: a comparison is accepted when its similarity score is >= the
decision threshold. FMR and FNMR definitions below hinge on this rule.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dataset import ComparisonSet, Dataset
from .errors import DataError

ALL_LABEL = "All"


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two embedding vectors, in [-1, 1].

    Equals the plain dot product for unit-norm inputs.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite embedding entries")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm input vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def score_pairs(dataset: Dataset, pairs: ComparisonSet) -> ComparisonSet:
    """Fill cosine scores for every pair, preserving pair order.

    Dataset rows are unit-norm by construction, so the cosine reduces to a
    row dot product (computed in float64, stored as float32).
    """
    emb = dataset.embeddings.astype(np.float64)

    def score(index_pairs: np.ndarray) -> np.ndarray:
        if index_pairs.size and index_pairs.max() >= dataset.n_images:
            raise DataError(
                f"pair index {int(index_pairs.max())} out of range "
                f"for dataset of {dataset.n_images} images"
            )
        if index_pairs.size == 0:
            return np.empty(0, dtype=np.float32)
        dots = np.einsum("ij,ij->i", emb[index_pairs[:, 0]], emb[index_pairs[:, 1]])
        return np.clip(dots, -1.0, 1.0).astype(np.float32)

    return ComparisonSet(
        genuine_pairs=pairs.genuine_pairs,
        impostor_pairs=pairs.impostor_pairs,
        genuine_scores=score(pairs.genuine_pairs),
        impostor_scores=score(pairs.impostor_pairs),
    )


class ThresholdResult(NamedTuple):
    threshold: float
    fmr: float


def threshold_at_fmr(impostor_scores, target_fmr: float) -> ThresholdResult:
    """Smallest threshold whose false match rate does not exceed the target.

    Candidates are the distinct observed impostor scores; when even the
    largest score still matches too often (ties at the maximum), the
    threshold steps one ulp past it, guaranteeing FMR <= target rather
    than FMR ~ target.
    """
    scores = np.asarray(impostor_scores)
    if scores.size == 0:
        raise DataError("empty impostor score list")
    if not 0.0 < target_fmr < 1.0:
        raise ValueError(f"target FMR must be in (0, 1), got {target_fmr}")
    if scores.size < math.ceil(1.0 / target_fmr):
        raise DataError(
            f"too few impostor scores ({scores.size}) to resolve FMR target "
            f"{target_fmr} (need at least {math.ceil(1.0 / target_fmr)})"
        )

    xs = np.sort(scores)
    candidates = np.unique(xs)
    # matches(t) = #{s >= t}, non-increasing over ascending candidates
    matches = scores.size - np.searchsorted(xs, candidates, side="left")
    fmr = matches / scores.size
    admissible = np.flatnonzero(fmr <= target_fmr)
    if admissible.size:
        k = admissible[0]
        return ThresholdResult(float(candidates[k]), float(fmr[k]))
    top = candidates[-1]
    return ThresholdResult(float(np.nextafter(top, np.inf)), 0.0)


def fnmr_at_threshold(genuine_scores, threshold: float) -> float:
    """Fraction of genuine scores strictly below the threshold."""
    scores = np.asarray(genuine_scores)
    if scores.size == 0:
        raise DataError("empty genuine score list")
    return float(np.count_nonzero(scores < threshold) / scores.size)


@dataclass
class ReportRow:
    label: str
    fnmr: dict[float, float | None]       # FMR target -> FNMR (None: no genuine pairs)
    thresholds: dict[float, float | None]
    genuine_count: int
    impostor_count: int


@dataclass
class VerificationReport:
    attribute: str
    fmr_targets: list[float]
    global_thresholds: dict[float, ThresholdResult]
    rows: list[ReportRow]                 # sorted labels, then the "All" row


def subgroup_fnmr_table(
    dataset: Dataset,
    scored: ComparisonSet,
    attribute: str,
    fmr_targets,
    per_subgroup_thresholds: bool = False,
) -> VerificationReport:
    """FNMR at fixed FMR targets, stratified by one attribute.

    Thresholds are computed once from all impostor scores and shared by every
    subgroup row; a subgroup row covers only genuine/impostor pairs whose BOTH
    members carry that label, so mixed-label genuine pairs count only in the
    "All" aggregate. ``per_subgroup_thresholds`` switches to thresholds drawn
    from each subgroup's own impostor scores (exploratory; rows whose impostor
    set is too small for a target are reported as undefined).
    """
    scored.require_scores()
    fmr_targets = list(fmr_targets)
    if not fmr_targets:
        raise ValueError("need at least one FMR target")
    labels = np.asarray(dataset.attribute_labels(attribute))

    global_thresholds = {
        t: threshold_at_fmr(scored.impostor_scores, t) for t in fmr_targets
    }

    gen_labels_p = labels[scored.genuine_pairs[:, 0]]
    gen_labels_r = labels[scored.genuine_pairs[:, 1]]
    imp_labels_p = labels[scored.impostor_pairs[:, 0]]
    imp_labels_r = labels[scored.impostor_pairs[:, 1]]

    rows = []
    for label in sorted(set(labels.tolist())):
        gen_mask = (gen_labels_p == label) & (gen_labels_r == label)
        imp_mask = (imp_labels_p == label) & (imp_labels_r == label)
        gen_scores = scored.genuine_scores[gen_mask]
        imp_scores = scored.impostor_scores[imp_mask]

        thresholds: dict[float, float | None] = {}
        fnmr: dict[float, float | None] = {}
        for t in fmr_targets:
            if per_subgroup_thresholds:
                try:
                    thr = threshold_at_fmr(imp_scores, t).threshold
                except DataError:
                    thresholds[t] = None
                    fnmr[t] = None
                    continue
            else:
                thr = global_thresholds[t].threshold
            thresholds[t] = thr
            fnmr[t] = fnmr_at_threshold(gen_scores, thr) if gen_scores.size else None

        rows.append(
            ReportRow(
                label=label,
                fnmr=fnmr,
                thresholds=thresholds,
                genuine_count=int(gen_scores.size),
                impostor_count=int(imp_scores.size),
            )
        )

    rows.append(
        ReportRow(
            label=ALL_LABEL,
            fnmr={
                t: fnmr_at_threshold(scored.genuine_scores, global_thresholds[t].threshold)
                for t in fmr_targets
            },
            thresholds={t: global_thresholds[t].threshold for t in fmr_targets},
            genuine_count=int(scored.genuine_scores.size),
            impostor_count=int(scored.impostor_scores.size),
        )
    )

    return VerificationReport(
        attribute=attribute,
        fmr_targets=fmr_targets,
        global_thresholds=global_thresholds,
        rows=rows,
    )


# ---------------------------------------------------------------------------
# presentation / serialization


def format_percent(rate: float | None) -> str:
    """0.0040 -> "0.40%"; undefined rates render as "--"."""
    if rate is None:
        return "--"
    return f"{100.0 * rate:.2f}%"


def render_table(report: VerificationReport) -> str:
    """LaTeX-style table body: one "label & x.xx% & y.yy%" line per row."""
    lines = []
    for row in report.rows:
        cells = [format_percent(row.fnmr[t]) for t in report.fmr_targets]
        lines.append(" & ".join([row.label] + cells))
    return "\n".join(lines)


def write_report_csv(path, report: VerificationReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            ["attribute", "label", "fmr_target", "threshold", "fnmr", "genuine_count", "impostor_count"]
        )
        for row in report.rows:
            for t in report.fmr_targets:
                thr = row.thresholds[t]
                fnmr = row.fnmr[t]
                writer.writerow(
                    [
                        report.attribute,
                        row.label,
                        repr(float(t)),
                        "" if thr is None else repr(float(thr)),
                        "" if fnmr is None else repr(float(fnmr)),
                        row.genuine_count,
                        row.impostor_count,
                    ]
                )


def report_as_dict(report: VerificationReport) -> dict:
    return {
        "attribute": report.attribute,
        "fmr_targets": [float(t) for t in report.fmr_targets],
        "global_thresholds": {
            repr(float(t)): {"threshold": r.threshold, "achieved_fmr": r.fmr}
            for t, r in report.global_thresholds.items()
        },
        "rows": [
            {
                "label": row.label,
                "fnmr": {repr(float(t)): row.fnmr[t] for t in report.fmr_targets},
                "thresholds": {repr(float(t)): row.thresholds[t] for t in report.fmr_targets},
                "genuine_count": row.genuine_count,
                "impostor_count": row.impostor_count,
            }
            for row in report.rows
        ],
    }


def write_report_json(path, report: VerificationReport) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report_as_dict(report), f, indent=2, sort_keys=True)
        f.write("\n")
