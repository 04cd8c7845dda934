import csv
import json
import math
import os

import numpy as np
import pytest

from fqb.cli import run
from fqb.dataset import load_pairs_csv, load_quality_csv
from fqb.datadir import load_data_dir
from fqb.synthetic import SubgroupSpec, SynthConfig, save_config


@pytest.fixture
def workspace(tmp_path):
    cfg = SynthConfig(
        dim=8,
        activation_dim=12,
        subgroups=[
            SubgroupSpec("clean", subjects=6, images_per_subject=2, noise_scale=0.1),
            SubgroupSpec("noisy", subjects=6, images_per_subject=2, noise_scale=0.4),
        ],
        seed=42,
    )
    cfg_path = tmp_path / "cfg.json"
    save_config(cfg_path, cfg)
    data = tmp_path / "data"
    assert run(["synth", "--config", str(cfg_path), "--out", str(data)]) == 0
    return tmp_path


def tree_bytes(root):
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_synth_writes_documented_layout(workspace):
    data = workspace / "data"
    for name in (
        "metadata.csv",
        "embeddings.fqbe",
        "activations.fqbe",
        "last_layer.fqbe",
        "last_layer.json",
        "truth.csv",
        "synth_config.json",
    ):
        assert (data / name).exists(), name
    ds = load_data_dir(data)
    assert ds.n_images == 24


def test_full_pipeline_and_idempotence(workspace):
    data = str(workspace / "data")
    pairs = str(workspace / "pairs.csv")
    assert run(["pairs", "--data", data, "--out", pairs, "--cap", "20", "--seed", "1"]) == 0

    q_serfiq = str(workspace / "q_serfiq.csv")
    assert run(["quality", "serfiq", "--data", data, "--out", q_serfiq,
                "--m", "30", "--seed", "1"]) == 0

    model = str(workspace / "model.json")
    assert run(["train-quality", "--data", data, "--pairs", pairs, "--out", model]) == 0

    q_br = str(workspace / "q_br.csv")
    assert run(["quality", "bestrowden", "--data", data, "--model", model, "--out", q_br]) == 0

    table = str(workspace / "table.csv")
    assert run(["fnmr-table", "--data", data, "--pairs", pairs,
                "--attribute", "subgroup", "--fmr", "0.05", "--out", table]) == 0
    assert (workspace / "table.json").exists()

    erc = str(workspace / "erc.csv")
    assert run(["erc", "--data", data, "--pairs", pairs, "--quality", q_serfiq,
                "--fmr", "0.05", "--grid", "0,0.1,0.2", "--out", erc]) == 0

    prop = str(workspace / "prop.csv")
    assert run(["proportions", "--data", data, "--quality", q_serfiq,
                "--attribute", "subgroup", "--points", "10", "--out", prop]) == 0

    dist = str(workspace / "dist.csv")
    assert run(["distributions", "--data", data, "--quality", q_serfiq,
                "--attribute", "subgroup", "--bins", "10", "--out", dist]) == 0
    assert (workspace / "dist.json").exists()

    # idempotence: identical flags overwrite with identical bytes
    before = {p: (workspace / p).read_bytes() for p in
              ("pairs.csv", "q_serfiq.csv", "erc.csv", "prop.csv", "dist.csv")}
    run(["pairs", "--data", data, "--out", pairs, "--cap", "20", "--seed", "1"])
    run(["quality", "serfiq", "--data", data, "--out", q_serfiq, "--m", "30", "--seed", "1"])
    run(["erc", "--data", data, "--pairs", pairs, "--quality", q_serfiq,
         "--fmr", "0.05", "--grid", "0,0.1,0.2", "--out", erc])
    run(["proportions", "--data", data, "--quality", q_serfiq,
         "--attribute", "subgroup", "--points", "10", "--out", prop])
    run(["distributions", "--data", data, "--quality", q_serfiq,
         "--attribute", "subgroup", "--bins", "10", "--out", dist])
    for p, content in before.items():
        assert (workspace / p).read_bytes() == content, p


def test_erc_csv_matches_scripted_recomputation(tmp_path):
    # default synthetic dataset, FMR target 0.1%
    data = str(tmp_path / "data")
    run(["synth", "--out", data])
    pairs_path = tmp_path / "pairs.csv"
    q_path = tmp_path / "q.csv"
    erc_path = tmp_path / "erc.csv"
    run(["pairs", "--data", data, "--out", str(pairs_path), "--cap", "20", "--seed", "1"])
    run(["quality", "serfiq", "--data", data, "--out", str(q_path), "--m", "20", "--seed", "1"])
    run(["erc", "--data", data, "--pairs", str(pairs_path), "--quality", str(q_path),
         "--fmr", "0.001", "--grid", "0,0.25", "--out", str(erc_path)])

    # scripted re-derivation of the r=0.25 row from the emitted files only
    ds = load_data_dir(tmp_path / "data")
    scored = load_pairs_csv(pairs_path, ds)
    quality = load_quality_csv(q_path, ds, estimator_name="q")
    imp = np.sort(scored.impostor_scores)
    candidates = np.unique(imp)
    fmrs = (imp.size - np.searchsorted(imp, candidates, side="left")) / imp.size
    thr = float(candidates[np.flatnonzero(fmrs <= 0.001)[0]])

    n = ds.n_images
    order = sorted(range(n), key=lambda i: (quality.values[i], i))
    rejected = set(order[: math.ceil(0.25 * n)])
    kept = [
        s for (p, r), s in zip(scored.genuine_pairs.tolist(), scored.genuine_scores.tolist())
        if p not in rejected and r not in rejected
    ]
    expected_fnmr = sum(1 for s in kept if s < thr) / len(kept)

    with open(erc_path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows[-1]["reject_ratio"] == "0.25"
    assert float(rows[-1]["fnmr"]) == expected_fnmr
    assert int(rows[-1]["remaining_genuine"]) == len(kept)


def test_report_inventory_and_determinism(workspace):
    data = str(workspace / "data")
    rep1, rep2 = workspace / "rep1", workspace / "rep2"
    args = ["report", "--data", data, "--fmr", "0.05", "--m", "20",
            "--points", "10", "--bins", "10", "--seed", "1", "--cap", "20"]
    assert run(args + ["--out", str(rep1)]) == 0
    assert run(args + ["--out", str(rep2)]) == 0
    t1, t2 = tree_bytes(rep1), tree_bytes(rep2)
    assert list(t1) == list(t2)
    assert all(t1[k] == t2[k] for k in t1)
    for est in ("serfiq", "bestrowden"):
        adir = rep1 / est / "subgroup"
        assert sorted(p.name for p in adir.iterdir()) == [
            "distributions.csv", "erc_fmr0.05.csv", "fnmr_table.csv", "proportions.csv",
        ]
        assert (rep1 / est / "summary.json").exists()


def test_report_external_estimator_and_flags(workspace):
    data = str(workspace / "data")
    ds = load_data_dir(workspace / "data")
    ext = workspace / "cots.csv"
    with open(ext, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "score"])
        for k, rec in enumerate(ds.records):
            writer.writerow([rec.image_id, str(0.1 * k)])
    rep = workspace / "rep_ext"
    assert run(["report", "--data", data, "--out", str(rep), "--fmr", "0.05",
                "--no-serfiq", "--no-bestrowden", "--external", f"cots={ext}",
                "--points", "10", "--bins", "10", "--cap", "20", "--seed", "1"]) == 0
    assert (rep / "cots" / "subgroup" / "proportions.csv").exists()
    assert not (rep / "serfiq").exists()


def test_quality_serfiq_missing_activations_exit_2(tmp_path, capsys):
    data = tmp_path / "plain"
    data.mkdir()
    rng = np.random.default_rng(0)
    emb = rng.standard_normal((4, 4))
    from fqb.dataset import write_matrix
    with open(data / "metadata.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image_id", "subject_id"])
        for k in range(4):
            writer.writerow([f"i{k}", f"s{k % 2}"])
    write_matrix(data / "embeddings.fqbe", emb)
    code = run(["quality", "serfiq", "--data", str(data), "--out", str(tmp_path / "q.csv")])
    assert code == 2
    err = capsys.readouterr().err
    assert "activations" in err and "activations.fqbe" in err


def test_usage_errors_exit_1(capsys):
    assert run(["bogus"]) == 1
    assert run(["erc", "--data", "x"]) == 1
    assert run(["fnmr-table", "--data", "x", "--pairs", "y",
                "--attribute", "a", "--fmr", "2.0", "--out", "z"]) == 1
    capsys.readouterr()


def test_data_errors_exit_2(tmp_path, capsys):
    assert run(["pairs", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "p.csv")]) == 2
    capsys.readouterr()


def test_help_exits_zero(capsys):
    assert run(["--help"]) == 0
    for cmd in ("synth", "pairs", "quality", "train-quality", "fnmr-table",
                "erc", "proportions", "distributions", "report"):
        assert run([cmd, "--help"]) == 0, cmd
    capsys.readouterr()


def test_run_config_file_with_flag_override(workspace):
    data = str(workspace / "data")
    pairs = workspace / "p1.csv"
    pairs_b = workspace / "p2.csv"
    pairs_c = workspace / "p3.csv"
    run_cfg = workspace / "run.json"
    run_cfg.write_text(json.dumps({"cap": 5, "seed": 3}))

    # config supplies cap and seed
    assert run(["pairs", "--data", data, "--out", str(pairs), "--config", str(run_cfg)]) == 0
    # identical explicit flags
    assert run(["pairs", "--data", data, "--out", str(pairs_b), "--cap", "5", "--seed", "3"]) == 0
    assert pairs.read_bytes() == pairs_b.read_bytes()
    # explicit flag wins over the config value
    assert run(["pairs", "--data", data, "--out", str(pairs_c), "--config", str(run_cfg),
                "--seed", "4"]) == 0
    assert pairs_c.read_bytes() != pairs.read_bytes()


def test_fqb_threads_env_does_not_change_results(workspace, monkeypatch):
    data = str(workspace / "data")
    q1, q2 = workspace / "qa.csv", workspace / "qb.csv"
    monkeypatch.setenv("FQB_THREADS", "1")
    assert run(["quality", "serfiq", "--data", data, "--out", str(q1), "--m", "20", "--seed", "9"]) == 0
    monkeypatch.setenv("FQB_THREADS", "3")
    assert run(["quality", "serfiq", "--data", data, "--out", str(q2), "--m", "20", "--seed", "9"]) == 0
    assert q1.read_bytes() == q2.read_bytes()
    monkeypatch.setenv("FQB_THREADS", "zebra")
    assert run(["quality", "serfiq", "--data", data, "--out", str(q1), "--m", "20"]) == 2
