import csv
import hashlib
import json
import logging
import os

import numpy as np
import pytest

from main import EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION, main
from reporting import write_alpha_csv


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if type(handler) in (logging.StreamHandler, logging.FileHandler):
            root.removeHandler(handler)
            handler.close()


def _md5(path):
    with open(path, "rb") as f:
        return hashlib.md5(f.read()).hexdigest()


def _last_json(out):
    return json.loads(out.strip().splitlines()[-1])


def _read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _quick_config(tmp_path, **training):
    path = os.path.join(tmp_path, "quick.json")
    with open(path, "w") as f:
        json.dump({"training": dict({"epochs": 4, "patience": 3, "log_every": 2}, **training)}, f)
    return path


def _gen(tmp_path, name="data.nhnn", *extra):
    path = os.path.join(tmp_path, name)
    assert main(["gen", "--out", path, "--nodes", "40", "--hyperedges", "16", "--feature-dim", "8",
                 "--seed", "3", *extra]) == EXIT_OK
    return path


def test_gen_is_deterministic(tmp_path):
    first = _gen(tmp_path, "a.nhnn")
    second = _gen(tmp_path, "b.nhnn")
    assert _md5(first) == _md5(second)


def test_gen_oracle_reports_accuracy(tmp_path, capsys):
    _gen(tmp_path, "o.nhnn", "--oracle")
    assert 0.0 <= _last_json(capsys.readouterr().out)["oracle_accuracy"] <= 1.0


def test_train_eval_analyze_flow(tmp_path, capsys):
    data = _gen(tmp_path)
    checksum = _md5(data)
    run = os.path.join(tmp_path, "run")
    assert main(["train", "--dataset", data, "--out", run, "--config", _quick_config(tmp_path),
                 "--layers", "1", "--hidden", "8", "--factors", "2", "--lambda", "0.01"]) == EXIT_OK
    for name in ("config.json", "params.nhnp", "loss_curve.csv", "alpha.csv", "alpha_layer0.csv",
                 "metrics.json", "ledger.csv"):
        assert os.path.isfile(os.path.join(run, name)), name
    assert _md5(data) == checksum

    curve = _read_csv(os.path.join(run, "loss_curve.csv"))
    assert [int(r["epoch"]) for r in curve] == list(range(1, len(curve) + 1))
    ledger = _read_csv(os.path.join(run, "ledger.csv"))
    assert len(ledger) == 1 and ledger[0]["variant"] == "full" and ledger[0]["num_factors"] == "2"
    alpha_rows = _read_csv(os.path.join(run, "alpha.csv"))
    assert [int(r["hyperedge"]) for r in alpha_rows] == list(range(16))

    capsys.readouterr()
    assert main(["eval", "--params", os.path.join(run, "params.nhnp"), "--dataset", data, "--split", "test"]) == 0
    report = _last_json(capsys.readouterr().out)
    assert report["split"] == "test" and 0.0 <= report["macro_f1"] <= 1.0

    analysis = os.path.join(tmp_path, "analysis")
    assert main(["analyze", "--alpha", os.path.join(run, "alpha.csv"), "--dataset", data, "--out", analysis]) == 0
    summary = _last_json(capsys.readouterr().out)
    assert "factor_auc" in summary and "factor_ari" in summary
    assert os.path.isfile(os.path.join(analysis, "pearson.csv"))
    assert len(_read_csv(os.path.join(analysis, "relevance_similarity.csv"))) == 16


def test_analyze_duplicate_columns(tmp_path):
    col = np.random.default_rng(0).uniform(0.1, 0.9, 12)
    alpha_path = os.path.join(tmp_path, "alpha.csv")
    write_alpha_csv(alpha_path, np.stack([col, col, 1.0 - col], axis=1))
    clusters_path = os.path.join(tmp_path, "clusters.csv")
    with open(clusters_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["hyperedge", "cluster"])
        writer.writerows([[i, i % 3] for i in range(12)])
    out = os.path.join(tmp_path, "out")
    assert main(["analyze", "--alpha", alpha_path, "--clusters", clusters_path, "--out", out]) == EXIT_OK

    pearson = _read_csv(os.path.join(out, "pearson.csv"))
    assert abs(float(pearson[0]["factor_1"]) - 1.0) < 1e-12
    assert abs(float(pearson[0]["factor_2"]) + 1.0) < 1e-12
    clusters = _read_csv(os.path.join(out, "cluster_similarity.csv"))
    assert len(clusters) == 3


def test_gradcheck_passes(tmp_path, capsys):
    report = os.path.join(tmp_path, "grad.csv")
    assert main(["gradcheck", "--seeds", "2", "--out", report]) == EXIT_OK
    assert _last_json(capsys.readouterr().out)["failed"] == 0
    assert all(r["passed"] == "1" for r in _read_csv(report))


def test_gradcheck_failure_is_a_verification_error(tmp_path, capsys):
    config = os.path.join(tmp_path, "strict.json")
    with open(config, "w") as f:
        json.dump({"gradcheck": {"tolerance": 0.0}}, f)
    assert main(["gradcheck", "--seeds", "1", "--config", config]) == EXIT_VERIFICATION
    assert capsys.readouterr().err.startswith("error: VerificationFailed:")


def test_bench_writes_timings(tmp_path, capsys):
    config = os.path.join(tmp_path, "bench.json")
    with open(config, "w") as f:
        json.dump({"benchmark": {"sizes": [{"num_nodes": 20, "num_hyperedges": 8, "mean_degree": 2.0, "hidden": 8},
                                           {"num_nodes": 20, "num_hyperedges": 8, "mean_degree": 4.0, "hidden": 8}],
                                 "trials": 1, "num_factors": 2, "feature_dim": 4}}, f)
    out = os.path.join(tmp_path, "bench.csv")
    assert main(["bench", "--config", config, "--out", out, "--hidden-doubling"]) == EXIT_OK
    rows = _read_csv(out)
    assert [int(r["hidden"]) for r in rows] == [8, 8, 16]


def test_sweep_writes_tables(tmp_path, capsys):
    data = _gen(tmp_path)
    grid = os.path.join(tmp_path, "grid.json")
    with open(grid, "w") as f:
        json.dump({"grid": {"train_ratio": [0.5, 0.3]}, "seeds": [0, 1]}, f)
    out = os.path.join(tmp_path, "sweep")
    assert main(["sweep", "--dataset", data, "--grid", grid, "--out", out, "--config", _quick_config(tmp_path),
                 "--layers", "1", "--hidden", "8", "--factors", "2"]) == EXIT_OK
    assert _last_json(capsys.readouterr().out) == {"runs": 4, "cells": 2}
    assert len(_read_csv(os.path.join(out, "sweep.csv"))) == 4
    assert len(_read_csv(os.path.join(out, "sweep_summary.csv"))) == 2
    assert len(_read_csv(os.path.join(out, "ledger.csv"))) == 4


@pytest.mark.parametrize("argv", [
    ["train"],
    ["train", "--dataset", "missing.nhnn", "--out", "x", "--variant", "bogus"],
    ["eval", "--params", "missing.nhnp", "--dataset", "missing.nhnn"],
    ["frobnicate"],
])
def test_bad_arguments_exit_two(argv, capsys):
    assert main(argv) == EXIT_USAGE
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ") and len(err.splitlines()) == 1


def test_invalid_model_settings_exit_two(tmp_path, capsys):
    data = _gen(tmp_path)
    code = main(["train", "--dataset", data, "--out", os.path.join(tmp_path, "run"), "--factors", "3",
                 "--hidden", "8"])
    assert code == EXIT_USAGE
    assert capsys.readouterr().err.startswith("error: ModelConfigError:")


def test_pilot_writes_calibration_record(tmp_path, capsys):
    data = _gen(tmp_path)
    config = os.path.join(tmp_path, "pilot.json")
    with open(config, "w") as f:
        json.dump({"pilot": {"seeds": [0, 1], "jobs": 1,
                             "model": {"num_layers": 1, "num_factors": 2, "hidden": 8, "dropout": 0.0},
                             "training": {"epochs": 2, "patience": 3}}}, f)
    record = os.path.join(tmp_path, "calibration", "record.json")
    assert main(["pilot", "--dataset", data, "--config", config, "--out", record]) == EXIT_OK
    summary = _last_json(capsys.readouterr().out)
    assert 0 <= summary["positive_margins"] <= 2
    assert summary["thresholds"]["calibrated"] is True
    with open(record) as f:
        assert json.load(f)["measured"]["seeds"] == [0, 1]


def test_pilot_rejects_zero_seeds(tmp_path, capsys):
    data = _gen(tmp_path)
    assert main(["pilot", "--dataset", data, "--seeds", "0", "--out", os.path.join(tmp_path, "r.json")]) == EXIT_USAGE


def test_hyperedge_task_gen_and_train(tmp_path, capsys):
    data = os.path.join(tmp_path, "edges.nhnn")
    assert main(["gen", "--out", data, "--task", "hyperedge", "--nodes", "40", "--hyperedges", "24",
                 "--feature-dim", "8", "--seed", "2", "--oracle"]) == EXIT_OK
    assert 0.0 <= _last_json(capsys.readouterr().out)["oracle_accuracy"] <= 1.0
    run = os.path.join(tmp_path, "run")
    assert main(["train", "--dataset", data, "--out", run, "--config", _quick_config(tmp_path),
                 "--layers", "1", "--hidden", "8", "--factors", "2"]) == EXIT_OK
    with open(os.path.join(run, "metrics.json")) as f:
        assert set(json.load(f)["test"]) == {"accuracy", "macro_f1", "micro_f1"}
