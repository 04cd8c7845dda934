"""Correlation analyses between quality assignment and recognition error.

Three views, mirroring how quality/bias coupling is usually audited:

* error-vs-reject curves: FNMR left after discarding the lowest-quality
  fraction of images at a fixed decision threshold;
* subgroup proportion curves: each label's share of the images surviving a
  sweep of quality thresholds (quantile grid, so curves are invariant under
  monotone rescaling of the estimator);
* per-subgroup quality distributions with pairwise histogram overlap.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dataset import ComparisonSet, Dataset, QualityScores
from .errors import DataError
from .verification import (
    VerificationReport,
    fnmr_at_threshold,
    subgroup_fnmr_table,
    threshold_at_fmr,
    write_report_csv,
)

DEFAULT_REJECT_GRID = tuple(i / 50 for i in range(50))


class ErcPoint(NamedTuple):
    reject_ratio: float
    fnmr: float | None          # None: no genuine pairs remain
    remaining_genuine: int


@dataclass
class ErrorRejectCurve:
    fmr_target: float
    threshold: float
    achieved_fmr: float
    points: list[ErcPoint]


class ProportionPoint(NamedTuple):
    level: float                # quantile level of the threshold
    threshold: float
    fractions: dict[str, float]
    remaining: int


@dataclass
class ProportionCurve:
    attribute: str
    labels: list[str]
    points: list[ProportionPoint]


@dataclass
class DistributionSummary:
    attribute: str
    bin_edges: np.ndarray
    histograms: dict[str, np.ndarray]     # label -> probability mass per bin
    overlaps: dict[tuple[str, str], float]

    def overlap(self, a: str, b: str) -> float:
        if a == b:
            return 1.0
        return self.overlaps[(a, b) if a < b else (b, a)]


def _rejection_order(values: np.ndarray) -> np.ndarray:
    # lowest quality first; ties resolved by ascending image index
    return np.lexsort((np.arange(values.size), values))


def error_vs_reject(
    scored: ComparisonSet,
    quality: QualityScores,
    fmr_target: float,
    grid=DEFAULT_REJECT_GRID,
    rederive_threshold: bool = False,
) -> ErrorRejectCurve:
    """FNMR after rejecting the lowest-quality images, over a ratio grid.

    The decision threshold is fixed once from the full impostor set; at each
    ratio r the ceil(r * N) lowest-quality images (ties by image index) are
    discarded together with every pair touching them, and FNMR is recomputed
    over the surviving genuine pairs. ``rederive_threshold`` instead refits
    the threshold on the surviving impostor scores at every point (for
    sensitivity studies; points whose impostor set becomes too small are
    reported as undefined).
    """
    scored.require_scores()
    ratios = sorted(set(float(r) for r in grid))
    if not ratios:
        raise DataError("empty reject-ratio grid")
    if ratios[0] < 0.0 or ratios[-1] >= 1.0:
        raise ValueError("reject ratios must lie in [0, 1)")
    if 0.0 not in ratios:
        ratios.insert(0, 0.0)

    values = quality.values
    n = values.size
    all_pairs = np.concatenate([scored.genuine_pairs, scored.impostor_pairs])
    if all_pairs.size and all_pairs.max() >= n:
        raise DataError(
            f"quality vector covers {n} images but pairs reference "
            f"index {int(all_pairs.max())}"
        )

    base = threshold_at_fmr(scored.impostor_scores, fmr_target)
    order = _rejection_order(values)

    points = []
    for r in ratios:
        k = math.ceil(r * n)
        keep = np.ones(n, dtype=bool)
        keep[order[:k]] = False
        gen_keep = keep[scored.genuine_pairs[:, 0]] & keep[scored.genuine_pairs[:, 1]]
        gen_scores = scored.genuine_scores[gen_keep]

        threshold = base.threshold
        if rederive_threshold:
            imp_keep = keep[scored.impostor_pairs[:, 0]] & keep[scored.impostor_pairs[:, 1]]
            try:
                threshold = threshold_at_fmr(scored.impostor_scores[imp_keep], fmr_target).threshold
            except DataError:
                points.append(ErcPoint(r, None, int(gen_scores.size)))
                continue

        fnmr = fnmr_at_threshold(gen_scores, threshold) if gen_scores.size else None
        points.append(ErcPoint(r, fnmr, int(gen_scores.size)))

    return ErrorRejectCurve(
        fmr_target=float(fmr_target),
        threshold=base.threshold,
        achieved_fmr=base.fmr,
        points=points,
    )


def proportion_vs_threshold(
    dataset: Dataset,
    quality: QualityScores,
    attribute: str,
    num_points: int = 100,
) -> ProportionCurve:
    """Subgroup shares of the images that survive quality thresholding.

    Thresholds are the empirical quantiles of the pooled quality values at
    levels 0, 1/num_points, ..., (num_points - 1)/num_points (upper empirical
    quantile, so every threshold is an observed value and at least one image
    always survives). A stable share across thresholds is the unbiased
    signature; a shrinking share means the estimator assigns that subgroup
    lower quality.
    """
    if num_points < 1:
        raise ValueError("num_points must be >= 1")
    labels = np.asarray(dataset.attribute_labels(attribute))
    values = quality.values
    if values.size != dataset.n_images:
        raise DataError("quality vector length does not match dataset size")

    unique_labels = sorted(set(labels.tolist()))
    levels = [k / num_points for k in range(num_points)]
    thresholds = np.quantile(values, levels, method="higher")

    points = []
    for level, t in zip(levels, thresholds):
        keep = values >= t
        remaining = int(keep.sum())
        fractions = {
            label: float(np.count_nonzero(keep & (labels == label)) / remaining)
            for label in unique_labels
        }
        points.append(ProportionPoint(level, float(t), fractions, remaining))

    return ProportionCurve(attribute=attribute, labels=unique_labels, points=points)


def quality_distributions(
    dataset: Dataset,
    quality: QualityScores,
    attribute: str,
    bins: int = 50,
) -> DistributionSummary:
    """Per-label quality histograms on shared bins, plus pairwise overlap.

    Bins are equal-width over the pooled value range (single-bin fallback for
    a degenerate range); each label's histogram is normalized to probability
    mass. overlap(A, B) = sum_bins min(hA, hB): 1 for identical histograms,
    0 for disjoint supports.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    labels = np.asarray(dataset.attribute_labels(attribute))
    values = quality.values
    if values.size != dataset.n_images:
        raise DataError("quality vector length does not match dataset size")
    if values.size == 0:
        raise DataError("empty dataset")

    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        edges = np.linspace(lo, hi, bins + 1)
    else:
        edges = np.array([lo - 0.5, lo + 0.5])

    unique_labels = sorted(set(labels.tolist()))
    histograms = {}
    for label in unique_labels:
        counts, _ = np.histogram(values[labels == label], bins=edges)
        histograms[label] = counts / counts.sum()

    overlaps = {}
    for i, a in enumerate(unique_labels):
        for b in unique_labels[i + 1 :]:
            overlaps[(a, b)] = float(np.minimum(histograms[a], histograms[b]).sum())

    return DistributionSummary(
        attribute=attribute,
        bin_edges=edges,
        histograms=histograms,
        overlaps=overlaps,
    )


# ---------------------------------------------------------------------------
# serialization


def write_erc_csv(path, curve: ErrorRejectCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["reject_ratio", "fnmr", "remaining_genuine"])
        for p in curve.points:
            writer.writerow(
                [
                    repr(float(p.reject_ratio)),
                    "" if p.fnmr is None else repr(float(p.fnmr)),
                    p.remaining_genuine,
                ]
            )


def write_proportions_csv(path, curve: ProportionCurve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["threshold_quantile", "threshold_value", "label", "fraction", "remaining_total"])
        for p in curve.points:
            for label in curve.labels:
                writer.writerow(
                    [
                        repr(float(p.level)),
                        repr(float(p.threshold)),
                        label,
                        repr(float(p.fractions[label])),
                        p.remaining,
                    ]
                )


def write_distributions_csv(path, summary: DistributionSummary) -> None:
    edges = summary.bin_edges
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["label", "bin_index", "bin_left", "bin_right", "mass"])
        for label in sorted(summary.histograms):
            mass = summary.histograms[label]
            for k in range(mass.size):
                writer.writerow(
                    [
                        label,
                        k,
                        repr(float(edges[k])),
                        repr(float(edges[k + 1])),
                        repr(float(mass[k])),
                    ]
                )


def safe_name(name: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9._-]+", "_", name)
    return cleaned or "unnamed"


def fmr_tag(target: float) -> str:
    return f"{target:g}"


@dataclass
class AttributeBundle:
    fnmr_table: VerificationReport
    erc: dict[float, ErrorRejectCurve]
    proportions: ProportionCurve
    distributions: DistributionSummary


def bias_report(
    dataset: Dataset,
    scored: ComparisonSet,
    quality_sets,
    attributes,
    fmr_targets,
    out_dir,
    bins: int = 50,
    num_points: int = 100,
    erc_grid=DEFAULT_REJECT_GRID,
) -> dict[str, dict[str, AttributeBundle]]:
    """Write the full analysis bundle per (estimator, attribute).

    Layout under ``out_dir``::

        <estimator>/<attribute>/fnmr_table.csv
        <estimator>/<attribute>/erc_fmr<target>.csv   (one per FMR target)
        <estimator>/<attribute>/proportions.csv
        <estimator>/<attribute>/distributions.csv
        <estimator>/summary.json

    Identical inputs produce a byte-identical tree.
    """
    quality_sets = list(quality_sets)
    attributes = list(attributes)
    fmr_targets = list(fmr_targets)
    if not quality_sets or not attributes or not fmr_targets:
        raise DataError("need at least one estimator, one attribute and one FMR target")
    names = [safe_name(q.estimator_name) for q in quality_sets]
    if len(set(names)) != len(names):
        raise DataError(f"estimator names collide after sanitizing: {sorted(names)}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    # quality-independent, shared by every estimator
    tables = {a: subgroup_fnmr_table(dataset, scored, a, fmr_targets) for a in attributes}

    bundle: dict[str, dict[str, AttributeBundle]] = {}
    for quality, est_name in zip(quality_sets, names):
        est_dir = out / est_name
        est_dir.mkdir(exist_ok=True)
        bundle[quality.estimator_name] = {}
        summary: dict = {
            "estimator": quality.estimator_name,
            "fmr_targets": [float(t) for t in fmr_targets],
            "attributes": {},
        }

        for attribute in attributes:
            adir = est_dir / safe_name(attribute)
            adir.mkdir(exist_ok=True)

            table = tables[attribute]
            curves = {
                t: error_vs_reject(scored, quality, t, grid=erc_grid) for t in fmr_targets
            }
            proportions = proportion_vs_threshold(dataset, quality, attribute, num_points)
            distributions = quality_distributions(dataset, quality, attribute, bins)

            write_report_csv(adir / "fnmr_table.csv", table)
            for t, curve in curves.items():
                write_erc_csv(adir / f"erc_fmr{fmr_tag(t)}.csv", curve)
            write_proportions_csv(adir / "proportions.csv", proportions)
            write_distributions_csv(adir / "distributions.csv", distributions)

            summary["attributes"][attribute] = {
                "labels": proportions.labels,
                "global_thresholds": {
                    fmr_tag(t): {"threshold": r.threshold, "achieved_fmr": r.fmr}
                    for t, r in table.global_thresholds.items()
                },
                "erc_thresholds": {fmr_tag(t): curves[t].threshold for t in fmr_targets},
                "histogram_overlap": {
                    f"{a}|{b}": v for (a, b), v in sorted(distributions.overlaps.items())
                },
            }
            bundle[quality.estimator_name][attribute] = AttributeBundle(
                fnmr_table=table,
                erc=curves,
                proportions=proportions,
                distributions=distributions,
            )

        with open(est_dir / "summary.json", "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")

    return bundle
