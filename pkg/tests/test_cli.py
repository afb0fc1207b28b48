import csv
import json

import numpy as np
import pytest

from qsft.cli import main
from qsft.experiments import (ROW_FIELDS, SUMMARY_FIELDS, ExperimentConfig, expand_cells, run_sweep,
                              run_transform, transition_snr)
from qsft.oracle import SyntheticSpec, synthesize, write_table
from qsft.plans import SamplingPlan
from qsft.qary import all_indices
from qsft.spectral import SparseSpectrum, parse_spectrum

NOISELESS = ["--q", "3", "--n", "6", "--sparsity", "10", "--b", "3", "--seed", "1"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_noiseless_reports_zero_nmse(tmp_path, capsys):
    out = tmp_path / "f.txt"
    truth = tmp_path / "t.txt"
    report = tmp_path / "r.json"
    code = main(["run", *NOISELESS, "--out", str(out), "--truth", str(truth), "--report", str(report)])
    assert code == 0
    est, ref = SparseSpectrum.read(out), SparseSpectrum.read(truth)
    assert est.support() == ref.support()
    rep = json.loads(report.read_text())
    assert rep["nmse"] < 1e-20 and rep["converged"]
    assert rep["samples_raw"] == 3 * 7 * 27


def test_run_to_stdout(capsys):
    assert main(["run", *NOISELESS]) == 0
    captured = capsys.readouterr()
    F = parse_spectrum(captured.out)
    assert len(F) == 10
    assert json.loads(captured.err)["recovered"] == 10


def test_missing_oracle_file(tmp_path, capsys):
    out = tmp_path / "f.txt"
    code = main(["run", "--q", "3", "--n", "4", "--oracle", f"table:{tmp_path / 'nope.tbl'}",
                 "--out", str(out)])
    assert code == 2
    assert not out.exists()
    assert "does not exist" in capsys.readouterr().err


def test_emit_plan(tmp_path):
    out = tmp_path / "plan.json"
    # a command oracle that would fail if it were ever called
    code = main(["run", "--q", "3", "--n", "5", "--b", "2", "--regime", "robust-sl", "--p1", "4",
                 "--oracle", "cmd:false", "--sigma2", "0.1", "--emit-plan", "--out", str(out)])
    assert code == 0
    plan = SamplingPlan.from_json(out.read_text())
    assert plan.regime == "robust-sl" and plan.raw_query_count() == 3 * 4 * 6 * 9


def test_plan_file_round_trip(tmp_path, capsys):
    plan_path = tmp_path / "plan.json"
    assert main(["run", *NOISELESS, "--emit-plan", "--out", str(plan_path)]) == 0
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["run", *NOISELESS, "--out", str(a)]) == 0
    assert main(["run", *NOISELESS, "--plan", str(plan_path), "--out", str(b)]) == 0
    assert a.read_text() == b.read_text()


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"q": 3, "n": 6, "sparsity": 10, "b": 3, "seed": 1, "C": 2}))
    report = tmp_path / "r.json"
    assert main(["run", "--config", str(cfg), "--c-groups", "3", "--report", str(report),
                 "--out", str(tmp_path / "f.txt")]) == 0
    assert json.loads(report.read_text())["C"] == 3
    cfg.write_text(json.dumps({"q": 3, "bogus": 1}))
    assert main(["run", "--config", str(cfg)]) == 2


def test_usage_errors(capsys):
    assert main(["run", "--q", "3", "--n", "4", "--regime", "fancy"]) == 2
    assert main(["run", "--q", "3", "--n", "4", "--gamma", "1.5"]) == 2
    assert main(["run", "--q", "4", "--n", "4", "--regime", "coded", "--t", "1"]) == 2  # composite q
    with pytest.raises(SystemExit) as info:
        main(["run", "--q", "three"])
    assert info.value.code == 2


def test_oracle_failure_exit_code(tmp_path, capsys):
    out = tmp_path / "f.txt"
    assert main(["run", "--q", "3", "--n", "4", "--b", "2", "--oracle", "cmd:false", "--out", str(out)]) == 3
    assert not out.exists()


def test_non_convergence_exit_code(tmp_path, capsys):
    for seed in range(50):
        cfg = ExperimentConfig(q=3, n=6, sparsity=12, b=2, seed=seed)
        result, _, _ = run_transform(cfg)
        if result.iterations >= 2:
            break
    out = tmp_path / "f.txt"
    code = main(["run", "--q", "3", "--n", "6", "--sparsity", "12", "--b", "2", "--seed", str(seed),
                 "--max-iterations", "1", "--out", str(out)])
    assert code == 1
    assert len(SparseSpectrum.read(out)) > 0  # partial result is still written


def test_table_oracle_via_cli(tmp_path, capsys):
    truth, orc = synthesize(SyntheticSpec(3, 5, 6, seed=2))
    pts = all_indices(3, 5)
    table = tmp_path / "f.tbl"
    write_table(table, 3, 5, pts, orc.query_batch(pts))
    out = tmp_path / "f.txt"
    assert main(["run", "--q", "3", "--n", "5", "--b", "2", "--oracle", f"table:{table}",
                 "--out", str(out)]) == 0
    est = SparseSpectrum.read(out)
    assert est.support() == truth.support()
    assert max(abs(est[k] - truth[k]) for k in truth.support()) < 1e-9


def test_robust_external_oracle_needs_sigma2(tmp_path, capsys):
    table = tmp_path / "f.tbl"
    write_table(table, 2, 3, all_indices(2, 3), np.zeros(8, dtype=complex))
    assert main(["run", "--q", "2", "--n", "3", "--regime", "robust-sl", "--oracle", f"table:{table}"]) == 2


def test_coded_run_is_labelled_heuristic(tmp_path, capsys):
    report = tmp_path / "r.json"
    code = main(["run", "--q", "3", "--n", "9", "--sparsity", "5", "--b", "2", "--c-groups", "5",
                 "--regime", "coded", "--t", "1", "--report", str(report), "--out", str(tmp_path / "f.txt")])
    assert code == 0
    rep = json.loads(report.read_text())
    assert rep["heuristic"] is True and rep["nmse"] < 1e-20
    assert "heuristic" in capsys.readouterr().err


def test_single_cell_sweep_equals_run(tmp_path):
    cell = {"q": 3, "n": 6, "sparsity": 10, "b": 3, "regime": "noiseless"}
    rows = run_sweep({"base": cell, "trials": 1, "seed_base": 5}, tmp_path / "rows.csv")
    assert len(rows) == 1
    _, _, report = run_transform(ExperimentConfig(**cell, seed=5))
    row = rows[0]
    assert int(row["samples_raw"]) == report["samples_raw"]
    assert int(row["samples_unique"]) == report["samples_unique"]
    assert float(row["nmse"]) == report["nmse"]
    assert row["converged"] == str(report["converged"])


def test_sweep_csv_schema_and_resume(tmp_path):
    spec = {"base": {"q": 3, "n": 5, "b": 2, "regime": "robust-sl", "p1": 4, "mode": "assumption2"},
            "grid": {"snr_db": [0.0, 10.0], "sparsity": [4, 8]}, "trials": 3, "seed_base": 100}
    out = tmp_path / "rows.csv"
    summary = tmp_path / "summary.csv"
    rows = run_sweep(spec, out, summary=summary)
    assert len(rows) == 12
    with open(out) as fh:
        assert fh.readline().strip().split(",") == ROW_FIELDS
    with open(summary) as fh:
        assert fh.readline().strip().split(",") == SUMMARY_FIELDS
    assert len(read_csv(summary)) == 4
    assert sorted({r["seed"] for r in rows}) == ["100", "101", "102"]

    # resuming an interrupted sweep: drop the last rows and rerun
    lines = out.read_text().splitlines(keepends=True)
    out.write_text("".join(lines[:-5]))
    again = run_sweep(spec, out)
    assert len(again) == 12
    strip = [{k: v for k, v in r.items() if k != "wall_time"} for r in rows]
    strip_again = [{k: v for k, v in r.items() if k != "wall_time"} for r in again]
    key = lambda r: (int(r["cell"]), int(r["seed"]))  # noqa: E731
    assert sorted(strip, key=key) == sorted(strip_again, key=key)
    # complete sweeps are left alone
    assert len(run_sweep(spec, out)) == 12


def test_sweep_rows_reproducible(tmp_path):
    spec = {"base": {"q": 4, "n": 6, "b": 2, "sparsity": 6, "regime": "robust-sl", "p1": 6,
                     "snr_db": 5.0, "mode": "assumption2"}, "trials": 3}
    a = run_sweep(spec, tmp_path / "a.csv")
    b = run_sweep(spec, tmp_path / "b.csv", workers=2)
    drop = lambda rs: [{k: v for k, v in r.items() if k != "wall_time"} for r in rs]  # noqa: E731
    assert drop(a) == drop(b)


def test_expand_cells():
    cells = expand_cells({"base": {"q": 3}, "grid": {"n": [4, 5], "b": [1, 2]},
                          "cells": [{"n": 9}]})
    assert cells[0] == {"q": 3, "n": 9}
    assert len(cells) == 5 and {"q": 3, "n": 5, "b": 2} in cells


def test_sweep_cli_with_figures(tmp_path, capsys):
    out = tmp_path / "rows.csv"
    figs = tmp_path / "figs"
    code = main(["sweep", "--q", "4", "--n", "6", "--b", "2", "--sparsity", "4,8", "--regime", "robust-sl",
                 "--p1", "6", "--mode", "assumption2", "--snr-db=-5,5", "--trials", "2", "--seed", "0",
                 "--out", str(out), "--figures", str(figs)])
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 8
    summary = read_csv(tmp_path / "rows.summary.csv")
    assert {(r["S"], r["snr_db"]) for r in summary} == {("4", "-5.0"), ("4", "5.0"), ("8", "-5.0"), ("8", "5.0")}
    assert (figs / "success_vs_snr.png").stat().st_size > 1000


def test_plot_command(tmp_path, capsys):
    out = tmp_path / "rows.csv"
    run_sweep({"base": {"q": 3, "b": 2, "sparsity": 5}, "grid": {"n": [4, 5, 6]}, "trials": 2}, out,
              summary=tmp_path / "s.csv")
    assert main(["plot", str(tmp_path / "s.csv"), "--figures", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "runtime_vs_n.png").exists()
    assert main(["plot", str(out), "--figures", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "samples_vs_n.png").exists()
    assert main(["plot", str(tmp_path / "missing.csv"), "--figures", str(tmp_path / "c")]) == 2


def test_transition_snr():
    assert transition_snr([0, 5, 10], [0.0, 0.4, 0.8]) == pytest.approx(6.25)
    assert transition_snr([0, 5], [0.6, 1.0]) == 0
    assert transition_snr([0, 5], [0.1, 0.2]) == float("inf")
