"""CSV-to-PNG rendering for the four analysis figure kinds."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("erc", "proportions", "distributions", "fnmr")

_SCHEMAS = {
    "erc": ["reject_ratio", "fnmr", "remaining_genuine"],
    "proportions": ["threshold_quantile", "threshold_value", "label", "fraction", "remaining_total"],
    "distributions": ["label", "bin_index", "bin_left", "bin_right", "mass"],
    "fnmr": ["attribute", "label", "fmr_target", "threshold", "fnmr", "genuine_count", "impostor_count"],
}


class SchemaError(Exception):
    """Input CSV does not match the documented schema for its figure kind."""


@dataclass
class FigureSpec:
    kind: str
    input_path: str
    output_path: str
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")


def _read_rows(path, kind: str) -> list[dict[str, str]]:
    expected = _SCHEMAS[kind]
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot open {path}: {exc}") from exc
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != expected:
            raise SchemaError(
                f"{path}: header {header} does not match the {kind} schema {expected}"
            )
        rows = [dict(zip(expected, row)) for row in reader if row]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _parse_float(row, field, path):
    try:
        return float(row[field])
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{path}: unparsable {field} value {row[field]!r}") from exc


def render(spec: FigureSpec) -> None:
    """Render one figure; a pure input-file to output-file transform."""
    rows = _read_rows(spec.input_path, spec.kind)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=120)
    try:
        _RENDERERS[spec.kind](ax, rows, spec)
        if spec.title:
            ax.set_title(spec.title)
        fig.tight_layout()
        fig.savefig(spec.output_path)
    finally:
        plt.close(fig)


def _render_erc(ax, rows, spec):
    path = spec.input_path
    points = [
        (_parse_float(r, "reject_ratio", path), _parse_float(r, "fnmr", path))
        for r in rows
        if r["fnmr"] != ""
    ]
    if not points:
        raise SchemaError(f"{path}: every curve point is undefined")
    xs, ys = zip(*sorted(points))
    ax.plot(xs, ys, marker="o", markersize=3)
    ax.set_xlabel("ratio of unconsidered images")
    ax.set_ylabel("FNMR")
    ax.grid(True, alpha=0.3)


def _render_proportions(ax, rows, spec):
    path = spec.input_path
    labels = sorted({r["label"] for r in rows})
    levels = sorted({_parse_float(r, "threshold_quantile", path) for r in rows})
    index = {lv: k for k, lv in enumerate(levels)}
    shares = np.zeros((len(labels), len(levels)))
    for r in rows:
        i = labels.index(r["label"])
        j = index[_parse_float(r, "threshold_quantile", path)]
        shares[i, j] = _parse_float(r, "fraction", path)
    ax.stackplot(levels, shares, labels=labels, alpha=0.85)
    ax.set_xlabel("quality threshold (quantile)")
    ax.set_ylabel("proportion of remaining images")
    ax.set_xlim(levels[0], levels[-1])
    ax.set_ylim(0.0, 1.0)
    ax.legend(loc="upper left", fontsize=8)


def _render_distributions(ax, rows, spec):
    path = spec.input_path
    by_label: dict[str, list[tuple[int, float, float, float]]] = {}
    for r in rows:
        by_label.setdefault(r["label"], []).append(
            (
                int(_parse_float(r, "bin_index", path)),
                _parse_float(r, "bin_left", path),
                _parse_float(r, "bin_right", path),
                _parse_float(r, "mass", path),
            )
        )
    for label in sorted(by_label):
        bins = sorted(by_label[label])
        edges = [b[1] for b in bins] + [bins[-1][2]]
        mass = [b[3] for b in bins]
        ax.stairs(mass, edges, fill=True, alpha=0.45, label=label)
    ax.set_xlabel("quality score")
    ax.set_ylabel("probability mass")
    ax.legend(fontsize=8)


def _render_fnmr(ax, rows, spec):
    path = spec.input_path
    labels = list(dict.fromkeys(r["label"] for r in rows))  # keep row order
    targets = sorted({_parse_float(r, "fmr_target", path) for r in rows})
    rates = np.full((len(targets), len(labels)), np.nan)
    for r in rows:
        t = targets.index(_parse_float(r, "fmr_target", path))
        l = labels.index(r["label"])
        if r["fnmr"] != "":
            rates[t, l] = _parse_float(r, "fnmr", path)
    x = np.arange(len(labels), dtype=float)
    width = 0.8 / len(targets)
    for t, target in enumerate(targets):
        ax.bar(
            x + (t - (len(targets) - 1) / 2) * width,
            100.0 * rates[t],
            width=width,
            label=f"FMR {target:g}",
        )
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("FNMR (%)")
    ax.legend(fontsize=8)
    attribute = rows[0]["attribute"]
    ax.set_xlabel(attribute)


_RENDERERS = {
    "erc": _render_erc,
    "proportions": _render_proportions,
    "distributions": _render_distributions,
    "fnmr": _render_fnmr,
}
