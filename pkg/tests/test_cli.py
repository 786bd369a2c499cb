"""End-to-end command-line workflow: simulate -> fit -> summarize ->
compare -> ppc, exit codes, and rerun determinism."""

import json
import os

import numpy as np
import pytest

from srpc.cli import EXIT_INPUT, EXIT_OK, main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One simulated replicate plus a fitted model, shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    sim_dir = root / "sim"
    cfg = root / "cfg.toml"
    cfg.write_text(
        "[simulation]\n"
        "S = 2\nn_s = 60\np = 4\nd = 3\nK_global = 2\nK_local = 2\n"
        "local_frac = 0.5\n"
    )
    rc = main(
        ["simulate", "--config", str(cfg), "--replicates", "2",
         "--seed", "5", "--out", str(sim_dir)]
    )
    assert rc == EXIT_OK
    data = sim_dir / "rep_00" / "data.csv"
    fit_dir = root / "fit"
    rc = main(
        ["fit", "--data", str(data), "--k", "2", "--ks", "2",
         "--iters", "150", "--burn", "50", "--seed", "1", "--out", str(fit_dir)]
    )
    assert rc == EXIT_OK
    return root, sim_dir, fit_dir


def test_simulate_outputs(workspace):
    _, sim_dir, _ = workspace
    for rep in ("rep_00", "rep_01"):
        assert (sim_dir / rep / "data.csv").exists()
        assert (sim_dir / rep / "truth.json").exists()
    assert (sim_dir / "manifest.json").exists()
    # replicates differ
    a = (sim_dir / "rep_00" / "data.csv").read_text()
    b = (sim_dir / "rep_01" / "data.csv").read_text()
    assert a != b


def test_simulate_deterministic(workspace, tmp_path):
    root, sim_dir, _ = workspace
    again = tmp_path / "sim2"
    rc = main(
        ["simulate", "--config", str(root / "cfg.toml"), "--replicates", "2",
         "--seed", "5", "--out", str(again)]
    )
    assert rc == EXIT_OK
    for rep in ("rep_00", "rep_01"):
        assert (again / rep / "data.csv").read_text() == (
            sim_dir / rep / "data.csv"
        ).read_text()
        assert (again / rep / "truth.json").read_text() == (
            sim_dir / rep / "truth.json"
        ).read_text()


def test_fit_outputs(workspace):
    _, _, fit_dir = workspace
    for name in (
        "summary.json",
        "modal_patterns.csv",
        "fit_report.json",
        "predictions.csv",
        "nu_grid.csv",
        "similarity.bin",
        "manifest.json",
    ):
        assert (fit_dir / name).exists(), name
    assert (fit_dir / "chain" / "meta.json").exists()
    report = json.loads((fit_dir / "fit_report.json").read_text())
    assert report["dic6"] == pytest.approx(
        3 * report["dbar"] - 2 * report["dplugin"]
    )
    preds = (fit_dir / "predictions.csv").read_text().strip().splitlines()
    assert preds[0].split(",") == ["id", "subpop", "y", "cluster", "phi_hat"]
    assert len(preds) == 1 + 120


def test_fit_rerun_bit_exact(workspace, tmp_path):
    """Same command, same outputs, byte for byte (timings excluded)."""
    root, sim_dir, fit_dir = workspace
    data = sim_dir / "rep_00" / "data.csv"
    fit2 = tmp_path / "fit2"
    rc = main(
        ["fit", "--data", str(data), "--k", "2", "--ks", "2",
         "--iters", "150", "--burn", "50", "--seed", "1", "--out", str(fit2)]
    )
    assert rc == EXIT_OK
    for dirpath, _, files in os.walk(fit_dir):
        rel = os.path.relpath(dirpath, fit_dir)
        for name in files:
            if name == "manifest.json":
                continue
            a = os.path.join(str(fit_dir), rel, name)
            b = os.path.join(str(fit2), rel, name)
            with open(a, "rb") as fa, open(b, "rb") as fb:
                assert fa.read() == fb.read(), os.path.join(rel, name)
    ma = json.loads((fit_dir / "manifest.json").read_text())
    mb = json.loads((fit2 / "manifest.json").read_text())
    ma.pop("timings"), mb.pop("timings")
    ma.pop("outputs"), mb.pop("outputs")  # paths differ, hashes compared above
    ma["command"] = mb["command"] = None
    assert ma == mb


def test_summarize_from_chain(workspace, tmp_path):
    _, _, fit_dir = workspace
    out = tmp_path / "resummary"
    rc = main(
        ["summarize", "--chain", str(fit_dir / "chain"), "--k", "2",
         "--seed", "0", "--out", str(out)]
    )
    assert rc == EXIT_OK
    doc = json.loads((out / "summary.json").read_text())
    assert doc["k_star"] == 2
    orig = json.loads((fit_dir / "summary.json").read_text())
    assert doc["k_star"] == orig["k_star"]


def test_compare_metrics(workspace, tmp_path, capsys):
    _, sim_dir, fit_dir = workspace
    out = tmp_path / "cmp"
    rc = main(
        ["compare", "--truth", str(sim_dir / "rep_00" / "truth.json"),
         "--fit", str(fit_dir), "--seed", "0", "--out", str(out)]
    )
    assert rc == EXIT_OK
    table = (out / "metrics.csv").read_text().strip().splitlines()
    assert len(table) == 2
    header = table[0].split(",")
    assert "mse_outcome" in header and "sensitivity" in header
    row = dict(zip(header, table[1].split(",")))
    assert 0.0 <= float(row["mse_outcome"]) <= 1.0
    assert 0.0 <= float(row["sensitivity"]) <= 1.0


def test_ppc_command(workspace, tmp_path):
    _, sim_dir, _ = workspace
    out = tmp_path / "ppc"
    rc = main(
        ["ppc", "--data", str(sim_dir / "rep_00" / "data.csv"), "--model", "slca",
         "--r", "2", "--iters", "40", "--burn", "20", "--k", "2", "--ks", "2",
         "--seed", "3", "--out", str(out)]
    )
    assert rc == EXIT_OK
    doc = json.loads((out / "ppc_report.json").read_text())
    assert doc["r"] == 2
    assert len(doc["differences"]) == 2
    diffs = (out / "ppc_differences.csv").read_text().strip().splitlines()
    assert len(diffs) == 1 + 2


def test_missing_input_exit_code(tmp_path):
    rc = main(
        ["fit", "--data", str(tmp_path / "nope.csv"), "--k", "2",
         "--iters", "20", "--burn", "5", "--seed", "0",
         "--out", str(tmp_path / "out")]
    )
    assert rc == EXIT_INPUT


def test_bad_flag_combination(tmp_path, workspace):
    _, sim_dir, _ = workspace
    data = sim_dir / "rep_00" / "data.csv"
    # burn >= iters is a config error -> input exit code
    rc = main(
        ["fit", "--data", str(data), "--k", "2", "--iters", "10", "--burn", "10",
         "--seed", "0", "--out", str(tmp_path / "x")]
    )
    assert rc == EXIT_INPUT
