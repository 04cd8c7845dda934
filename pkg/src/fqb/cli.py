"""Command-line front door.

Subcommands::

    synth           generate a synthetic dataset directory
    pairs           build and score a comparison set
    quality         emit a quality CSV (serfiq | bestrowden | external)
    train-quality   fit the comparison-score quality regressor
    fnmr-table      per-subgroup FNMR table at fixed FMR targets
    erc             error-vs-reject curve for one estimator
    proportions     subgroup proportions over quality thresholds
    distributions   subgroup quality histograms + overlap
    report          full analysis bundle per estimator and attribute

Exit codes: 0 success, 1 usage error, 2 data error. All randomness flows
from ``--seed`` (default 1), so identical flags produce byte-identical
output files. Analysis subcommands accept ``--config run.json`` holding
flag defaults (explicit flags win); ``synth --config`` is the generator
config instead. The environment variable FQB_THREADS caps internal
parallelism (0 or unset: automatic).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, bestrowden, datadir, serfiq, synthetic, verification
from .dataset import (
    generate_pairs,
    load_pairs_csv,
    load_quality_csv,
    save_pairs_csv,
    save_quality_csv,
)
from .errors import DataError

DEFAULT_FMR_TARGETS = (0.001, 0.01)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _Options:
    """Flag values with JSON run-config fallback (flags win)."""

    def __init__(self, args):
        self.args = args
        self.config = {}
        path = getattr(args, "config", None)
        if path:
            try:
                with open(path, encoding="utf-8") as f:
                    self.config = json.load(f)
            except OSError as exc:
                raise DataError(f"cannot open run config {path}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON: {exc}") from exc
            if not isinstance(self.config, dict):
                raise DataError(f"{path}: run config must be a JSON object")

    def get(self, name, default=None):
        value = getattr(self.args, name, None)
        if value is None:
            value = self.config.get(name, default)
        return value


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated floats, got {text!r}") from exc


def _check_fmr_targets(targets) -> list[float]:
    try:
        targets = [float(t) for t in targets]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"FMR targets must be numbers, got {targets!r}") from exc
    for t in targets:
        if not 0.0 < t < 1.0:
            raise UsageError(f"FMR target must be in (0, 1), got {t}")
    return targets


def _json_mirror(out_path) -> Path:
    out = Path(out_path)
    return out.with_suffix(".json") if out.suffix == ".csv" else Path(str(out) + ".json")


def _load_scored_pairs(path, dataset):
    pairs = load_pairs_csv(path, dataset)
    if not pairs.is_scored:
        pairs = verification.score_pairs(dataset, pairs)
    return pairs


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    config = synthetic.load_config(args.config) if args.config else synthetic.default_config()
    if args.seed is not None:
        config.seed = args.seed
    dataset, _, _ = datadir.write_synthetic_dir(args.out, config)
    print(f"wrote {args.out}: {dataset.n_images} images, dim {dataset.dim}")
    return 0


def cmd_pairs(args) -> int:
    opts = _Options(args)
    dataset = datadir.load_data_dir(args.data)
    pairs = generate_pairs(
        dataset,
        impostor_cap_per_probe=int(opts.get("cap", 1000)),
        seed=int(opts.get("seed", 1)),
    )
    scored = verification.score_pairs(dataset, pairs)
    save_pairs_csv(args.out, dataset, scored)
    print(
        f"wrote {args.out}: {len(scored.genuine_pairs)} genuine, "
        f"{len(scored.impostor_pairs)} impostor pairs"
    )
    return 0


def cmd_quality_serfiq(args) -> int:
    opts = _Options(args)
    dataset = datadir.load_data_dir(args.data, need_activations=True)
    layer = datadir.load_layer(args.data)
    dropout = float(opts.get("dropout_rate", 0.5))
    if not 0.0 < dropout < 1.0:
        raise UsageError(f"dropout rate must be in (0, 1), got {dropout}")
    quality = serfiq.serfiq_dataset(
        dataset,
        layer,
        m=int(opts.get("m", 100)),
        dropout_rate=dropout,
        seed=int(opts.get("seed", 1)),
        normalize=bool(opts.get("normalize", False)),
    )
    save_quality_csv(args.out, dataset, quality)
    print(f"wrote {args.out}")
    return 0


def cmd_quality_bestrowden(args) -> int:
    dataset = datadir.load_data_dir(args.data)
    model = bestrowden.load_model(args.model)
    quality = bestrowden.predict_quality(model, dataset, estimator_name=args.name)
    save_quality_csv(args.out, dataset, quality)
    print(f"wrote {args.out}")
    return 0


def cmd_quality_external(args) -> int:
    dataset = datadir.load_data_dir(args.data)
    quality = load_quality_csv(args.scores, dataset, estimator_name=args.name)
    save_quality_csv(args.out, dataset, quality)
    print(f"wrote {args.out}")
    return 0


def cmd_train_quality(args) -> int:
    opts = _Options(args)
    dataset = datadir.load_data_dir(args.data)
    scored = _load_scored_pairs(args.pairs, dataset)
    grid = opts.get("lambda_grid")
    model, skipped = bestrowden.fit_from_scores(
        dataset,
        scored,
        lambda_grid=grid if grid else bestrowden.DEFAULT_LAMBDA_GRID,
        folds=int(opts.get("folds", 5)),
        seed=int(opts.get("seed", 1)),
    )
    bestrowden.save_model(args.out, model)
    print(
        f"wrote {args.out}: lambda {model.ridge_lambda:g}, "
        f"{model.metadata['n_samples']} labeled images ({len(skipped)} skipped)"
    )
    return 0


def cmd_fnmr_table(args) -> int:
    opts = _Options(args)
    targets = _check_fmr_targets(opts.get("fmr", list(DEFAULT_FMR_TARGETS)))
    dataset = datadir.load_data_dir(args.data)
    scored = _load_scored_pairs(args.pairs, dataset)
    report = verification.subgroup_fnmr_table(
        dataset,
        scored,
        args.attribute,
        targets,
        per_subgroup_thresholds=bool(opts.get("per_subgroup_thresholds", False)),
    )
    verification.write_report_csv(args.out, report)
    verification.write_report_json(_json_mirror(args.out), report)
    print(verification.render_table(report))
    print(f"wrote {args.out}")
    return 0


def cmd_erc(args) -> int:
    opts = _Options(args)
    targets = _check_fmr_targets([opts.get("fmr", 0.001)])
    dataset = datadir.load_data_dir(args.data)
    scored = _load_scored_pairs(args.pairs, dataset)
    name = args.name or Path(args.quality).stem
    quality = load_quality_csv(args.quality, dataset, estimator_name=name)
    grid = opts.get("grid")
    curve = analysis.error_vs_reject(
        scored,
        quality,
        targets[0],
        grid=grid if grid else analysis.DEFAULT_REJECT_GRID,
        rederive_threshold=bool(opts.get("rederive_threshold", False)),
    )
    analysis.write_erc_csv(args.out, curve)
    print(f"wrote {args.out}")
    return 0


def cmd_proportions(args) -> int:
    opts = _Options(args)
    dataset = datadir.load_data_dir(args.data)
    name = args.name or Path(args.quality).stem
    quality = load_quality_csv(args.quality, dataset, estimator_name=name)
    curve = analysis.proportion_vs_threshold(
        dataset, quality, args.attribute, num_points=int(opts.get("points", 100))
    )
    analysis.write_proportions_csv(args.out, curve)
    print(f"wrote {args.out}")
    return 0


def cmd_distributions(args) -> int:
    opts = _Options(args)
    dataset = datadir.load_data_dir(args.data)
    name = args.name or Path(args.quality).stem
    quality = load_quality_csv(args.quality, dataset, estimator_name=name)
    summary = analysis.quality_distributions(
        dataset, quality, args.attribute, bins=int(opts.get("bins", 50))
    )
    analysis.write_distributions_csv(args.out, summary)
    overlaps = {f"{a}|{b}": v for (a, b), v in sorted(summary.overlaps.items())}
    with open(_json_mirror(args.out), "w", encoding="utf-8") as f:
        json.dump({"attribute": args.attribute, "overlap": overlaps}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {args.out}")
    return 0


def _parse_external(specs) -> dict[str, str]:
    external = {}
    for spec in specs or []:
        name, sep, path = spec.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--external expects NAME=PATH, got {spec!r}")
        external[name] = path
    return external


def cmd_report(args) -> int:
    opts = _Options(args)
    seed = int(opts.get("seed", 1))
    targets = _check_fmr_targets(opts.get("fmr", list(DEFAULT_FMR_TARGETS)))
    data_root = Path(args.data)
    has_activations = (data_root / datadir.ACTIVATIONS).exists()
    has_layer = (data_root / datadir.LAYER_MATRIX).exists()
    dataset = datadir.load_data_dir(args.data, need_activations=False)

    attributes = opts.get("attribute") or dataset.attribute_names()
    if not attributes:
        raise DataError("dataset metadata has no attribute columns to stratify by")

    if args.pairs:
        scored = _load_scored_pairs(args.pairs, dataset)
    else:
        pairs = generate_pairs(dataset, impostor_cap_per_probe=int(opts.get("cap", 1000)), seed=seed)
        scored = verification.score_pairs(dataset, pairs)

    quality_sets = []
    use_serfiq = opts.get("serfiq")
    if use_serfiq is None:
        use_serfiq = has_activations and has_layer
    if use_serfiq:
        if not (has_activations and has_layer):
            missing = datadir.ACTIVATIONS if not has_activations else datadir.LAYER_MATRIX
            raise DataError(f"stochastic-embedding quality needs {data_root / missing}")
        dataset_full = datadir.load_data_dir(args.data, need_activations=True)
        layer = datadir.load_layer(args.data)
        dropout = float(opts.get("dropout_rate", 0.5))
        if not 0.0 < dropout < 1.0:
            raise UsageError(f"dropout rate must be in (0, 1), got {dropout}")
        quality_sets.append(
            serfiq.serfiq_dataset(
                dataset_full,
                layer,
                m=int(opts.get("m", 100)),
                dropout_rate=dropout,
                seed=seed,
            )
        )

    use_bestrowden = opts.get("bestrowden")
    if use_bestrowden is None or use_bestrowden:
        grid = opts.get("lambda_grid")
        model, _ = bestrowden.fit_from_scores(
            dataset,
            scored,
            lambda_grid=grid if grid else bestrowden.DEFAULT_LAMBDA_GRID,
            folds=int(opts.get("folds", 5)),
            seed=seed,
        )
        quality_sets.append(bestrowden.predict_quality(model, dataset))

    external = _parse_external(args.external)
    if not external and isinstance(opts.config.get("external"), dict):
        external = dict(opts.config["external"])
    for name in sorted(external):
        quality_sets.append(load_quality_csv(external[name], dataset, estimator_name=name))

    if not quality_sets:
        raise DataError("no quality estimator selected for the report")

    grid = opts.get("grid")
    analysis.bias_report(
        dataset,
        scored,
        quality_sets,
        attributes,
        targets,
        args.out,
        bins=int(opts.get("bins", 50)),
        num_points=int(opts.get("points", 100)),
        erc_grid=grid if grid else analysis.DEFAULT_REJECT_GRID,
    )
    names = ", ".join(q.estimator_name for q in quality_sets)
    print(f"wrote {args.out}: estimators [{names}] x attributes {list(attributes)}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fqb", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("--config", help="generator config JSON (default: built-in two-subgroup config)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pairs", help="build and score genuine/impostor pairs")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output pairs CSV")
    p.add_argument("--cap", type=int, help="impostor comparisons per probe (default 1000)")
    p.add_argument("--seed", type=int, help="sampling seed (default 1)")
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("quality", help="emit a per-image quality CSV")
    qsub = p.add_subparsers(dest="estimator", required=True)

    q = qsub.add_parser("serfiq", help="stochastic-embedding quality")
    q.add_argument("--data", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--m", type=int, help="stochastic embeddings per image (default 100)")
    q.add_argument("--dropout-rate", dest="dropout_rate", type=float, help="default 0.5")
    q.add_argument("--normalize", action="store_true", default=None,
                   help="L2-normalize stochastic embeddings before distances")
    q.add_argument("--seed", type=int)
    q.add_argument("--config", help="run config JSON")
    q.set_defaults(func=cmd_quality_serfiq)

    q = qsub.add_parser("bestrowden", help="predict with a trained quality regressor")
    q.add_argument("--data", required=True)
    q.add_argument("--model", required=True, help="model JSON from train-quality")
    q.add_argument("--out", required=True)
    q.add_argument("--name", default="bestrowden", help="estimator name for the output")
    q.set_defaults(func=cmd_quality_bestrowden)

    q = qsub.add_parser("external", help="ingest scores from an external estimator")
    q.add_argument("--data", required=True)
    q.add_argument("--scores", required=True, help="input image_id,score CSV")
    q.add_argument("--name", required=True, help="estimator name")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quality_external)

    p = sub.add_parser("train-quality", help="fit the comparison-score quality regressor")
    p.add_argument("--data", required=True)
    p.add_argument("--pairs", required=True, help="scored pairs CSV")
    p.add_argument("--out", required=True, help="output model JSON")
    p.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list,
                   help="comma-separated ridge strengths")
    p.add_argument("--folds", type=int, help="CV folds (default 5)")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_train_quality)

    p = sub.add_parser("fnmr-table", help="per-subgroup FNMR table")
    p.add_argument("--data", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--attribute", required=True)
    p.add_argument("--fmr", type=float, action="append", help="FMR target, repeatable (default 0.001 and 0.01)")
    p.add_argument("--per-subgroup-thresholds", dest="per_subgroup_thresholds",
                   action="store_true", default=None,
                   help="thresholds from each subgroup's own impostors (exploratory)")
    p.add_argument("--out", required=True, help="output CSV (JSON mirror written alongside)")
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_fnmr_table)

    p = sub.add_parser("erc", help="error-vs-reject curve")
    p.add_argument("--data", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--quality", required=True, help="quality CSV")
    p.add_argument("--name", help="estimator name (default: quality file stem)")
    p.add_argument("--fmr", type=float, help="FMR target (default 0.001)")
    p.add_argument("--grid", type=_float_list, help="comma-separated reject ratios")
    p.add_argument("--rederive-threshold", dest="rederive_threshold",
                   action="store_true", default=None,
                   help="refit the threshold on surviving impostors per point")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_erc)

    p = sub.add_parser("proportions", help="subgroup proportions over quality thresholds")
    p.add_argument("--data", required=True)
    p.add_argument("--quality", required=True)
    p.add_argument("--name", help="estimator name (default: quality file stem)")
    p.add_argument("--attribute", required=True)
    p.add_argument("--points", type=int, help="quantile grid size (default 100)")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_proportions)

    p = sub.add_parser("distributions", help="subgroup quality histograms")
    p.add_argument("--data", required=True)
    p.add_argument("--quality", required=True)
    p.add_argument("--name", help="estimator name (default: quality file stem)")
    p.add_argument("--attribute", required=True)
    p.add_argument("--bins", type=int, help="histogram bins (default 50)")
    p.add_argument("--out", required=True, help="output CSV (overlap JSON written alongside)")
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_distributions)

    p = sub.add_parser("report", help="full bundle: tables, curves, distributions")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pairs", help="scored pairs CSV (default: generate with --cap/--seed)")
    p.add_argument("--cap", type=int, help="impostor comparisons per probe (default 1000)")
    p.add_argument("--attribute", action="append", help="attribute to stratify by, repeatable (default: all)")
    p.add_argument("--fmr", type=float, action="append", help="FMR target, repeatable (default 0.001 and 0.01)")
    p.add_argument("--serfiq", action=argparse.BooleanOptionalAction, default=None,
                   help="include stochastic-embedding quality (default: when data allows)")
    p.add_argument("--bestrowden", action=argparse.BooleanOptionalAction, default=None,
                   help="include the comparison-score regressor, trained on the fly (default: yes)")
    p.add_argument("--external", action="append", help="NAME=PATH external quality CSV, repeatable")
    p.add_argument("--m", type=int, help="stochastic embeddings per image (default 100)")
    p.add_argument("--dropout-rate", dest="dropout_rate", type=float, help="default 0.5")
    p.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list)
    p.add_argument("--folds", type=int)
    p.add_argument("--bins", type=int, help="distribution histogram bins (default 50)")
    p.add_argument("--points", type=int, help="proportion-curve grid size (default 100)")
    p.add_argument("--grid", type=_float_list, help="ERC reject ratios")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_report)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return 0 if exc.code in (0, None) else int(exc.code)

    try:
        return int(args.func(args) or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
