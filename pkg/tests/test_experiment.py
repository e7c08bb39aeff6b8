import json
import math
import os

import numpy as np
import pytest

from ppverify.cli import main
from ppverify.errors import ConfigError
from ppverify.experiment import (
    ExperimentConfig,
    emit_report,
    run_experiment,
    summarize,
)
from ppverify.tabular import SyntheticSpec


def tiny_config(**overrides):
    base = dict(
        synthetic=SyntheticSpec(rows=200, features=4, classes=2),
        epsilon_grid=(1.0, math.inf),
        trials=2,
        query_count=6,
        background_size=4,
        lime_num_samples=300,
        master_seed=77,
        attack_group_size=15,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_run_produces_one_row_per_cell_and_method():
    cfg = tiny_config()
    report = run_experiment(cfg)
    assert len(report.rows) == 2 * 2 * 2  # grid x trials x methods
    methods = {(r.epsilon, r.trial, r.method) for r in report.rows}
    assert len(methods) == len(report.rows)
    assert all(r.status == "ok" for r in report.rows)
    assert all(0.0 <= r.accuracy <= 1.0 for r in report.rows)
    assert len(report.attack_rows) == 2 * 2


def test_summarize_aggregates_per_epsilon_and_method():
    report = run_experiment(tiny_config())
    summary = summarize(report)
    keys = {(s["epsilon"], s["method"]) for s in summary}
    assert (1.0, "ml") in keys and (math.inf, "threshold") in keys
    assert (1.0, "attack") in keys
    for s in summary:
        if s["method"] != "attack":
            assert s["n_trials"] == 2


def test_rerun_is_identical_in_memory():
    a = run_experiment(tiny_config())
    b = run_experiment(tiny_config())
    assert [(r.epsilon, r.trial, r.method, r.accuracy, r.status) for r in a.rows] == [
        (r.epsilon, r.trial, r.method, r.accuracy, r.status) for r in b.rows
    ]
    assert [(r.epsilon, r.trial, r.power, r.gamma) for r in a.attack_rows] == [
        (r.epsilon, r.trial, r.power, r.gamma) for r in b.attack_rows
    ]


def test_emit_report_writes_stable_files(tmp_path):
    report = run_experiment(tiny_config())
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    paths1 = emit_report(report, str(out1))
    paths2 = emit_report(report, str(out2))
    for key in ("results", "summary", "attack", "config", "accuracy_chart", "attack_chart"):
        b1 = open(paths1[key], "rb").read()
        b2 = open(paths2[key], "rb").read()
        assert b1 == b2, key
    # run_meta carries wall-clock timings and is exempt from byte identity
    assert os.path.exists(paths1["run_meta"])
    header = open(paths1["results"]).readline().strip()
    assert header == "epsilon,trial,method,accuracy,status"
    assert open(paths1["results"]).read().count("\n") == 1 + 8


def test_results_csv_epsilon_text_uses_inf():
    report = run_experiment(tiny_config(trials=1))
    out = summarize(report)
    assert any(math.isinf(s["epsilon"]) for s in out)


def test_config_roundtrip_through_dict():
    cfg = tiny_config()
    back = ExperimentConfig.from_dict(cfg.to_dict())
    assert back.to_dict() == cfg.to_dict()
    assert back.epsilon_grid == cfg.epsilon_grid


def test_config_rejects_unknown_keys():
    raw = tiny_config().to_dict()
    raw["typo_field"] = 1
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        tiny_config(trials=0).validate()
    with pytest.raises(ConfigError):
        tiny_config(epsilon_grid=()).validate()
    with pytest.raises(ConfigError):
        tiny_config(explainer="gradients").validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(source="csv", synthetic=None).validate()


def test_structured_failure_keeps_sweeping(tmp_path):
    # constant features plus a zero ridge make the explainer reject every
    # model; the run must record the failure per cell and keep the attack arm
    csv = tmp_path / "flat.csv"
    rows = "\n".join(f"5,{i},{i % 2}" for i in range(40))
    csv.write_text("a,b,label\n" + rows + "\n")
    cfg = tiny_config(
        source="csv", csv_path=str(csv), synthetic=None,
        lime_ridge=0.0, trials=1,
    )
    report = run_experiment(cfg)
    assert len(report.rows) == 4
    assert all(r.status.startswith("error:") for r in report.rows)
    assert all(math.isnan(r.accuracy) for r in report.rows)
    assert len(report.attack_rows) == 2
    assert all(a.status == "ok" for a in report.attack_rows)
    out = emit_report(report, str(tmp_path / "failed_run"))
    lines = open(out["results"]).read().splitlines()
    assert len(lines) == 5
    assert lines[1].split(",")[3] == ""  # accuracy cell left empty on failure


# ---------------------------------------------------------------------------
# CLI


def run_cli(*argv):
    return main(list(argv))


def test_cli_synth_privatize_train_respond_verify_attack(tmp_path, capsys):
    data = tmp_path / "d.csv"
    rel = tmp_path / "rel.csv"
    assert run_cli(
        "synth", "--rows", "160", "--features", "3", "--seed", "4",
        "--duplicates", "0", "--outliers", "0", "--missing", "0",
        "--output", str(data),
    ) == 0
    assert run_cli(
        "privatize", "--input", str(data), "--epsilon", "inf",
        "--seed", "1", "--output", str(rel),
    ) == 0
    assert open(data).read() == open(rel).read()  # infinite budget: identity

    proper = tmp_path / "proper.csv"
    sloppy = tmp_path / "sloppy.csv"
    assert run_cli(
        "preprocess", "--input", str(rel), "--pipeline", "15",
        "--seed", "0", "--output", str(proper),
    ) == 0
    assert run_cli(
        "preprocess", "--input", str(rel), "--pipeline", "3",
        "--seed", "0", "--output", str(sloppy),
    ) == 0

    m_proper = tmp_path / "proper.model.json"
    m_sloppy = tmp_path / "sloppy.model.json"
    for src, dst in ((proper, m_proper), (sloppy, m_sloppy)):
        assert run_cli(
            "train", "--input", str(src), "--arch", "logreg",
            "--seed", "0", "--output", str(dst),
        ) == 0

    queries = tmp_path / "queries.csv"
    assert run_cli(
        "synth", "--rows", "12", "--features", "3", "--seed", "9",
        "--duplicates", "0", "--outliers", "0", "--missing", "0",
        "--output", str(queries),
    ) == 0

    r_proper = tmp_path / "r_proper.csv"
    r_sloppy = tmp_path / "r_sloppy.csv"
    for model, out in ((m_proper, r_proper), (m_sloppy, r_sloppy)):
        assert run_cli(
            "respond", "--model", str(model), "--queries", str(queries),
            "--explainer", "lime", "--num-samples", "300", "--seed", "5",
            "--output", str(out),
        ) == 0
    header = open(r_proper).readline().strip().split(",")
    assert header[-2:] == ["intercept", "yhat"]

    verifier = tmp_path / "verifier.json"
    assert run_cli(
        "fit-verifier", "--method", "threshold", "--task", "binary",
        "--responses", f"0={r_proper}", "--responses", f"1={r_sloppy}",
        "--reference", str(r_proper), "--output", str(verifier),
    ) == 0
    capsys.readouterr()
    assert run_cli(
        "verify", "--verifier", str(verifier), "--target", str(r_proper),
        "--reference", str(r_proper),
    ) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["is_proper"] is True

    case = tmp_path / "case.csv"
    control = tmp_path / "control.csv"
    assert run_cli(
        "synth", "--rows", "30", "--features", "3", "--seed", "21",
        "--duplicates", "0", "--outliers", "0", "--missing", "0",
        "--output", str(case),
    ) == 0
    assert run_cli(
        "synth", "--rows", "30", "--features", "3", "--seed", "22",
        "--duplicates", "0", "--outliers", "0", "--missing", "0",
        "--output", str(control),
    ) == 0
    capsys.readouterr()
    assert run_cli(
        "attack", "--released", str(rel), "--case", str(case),
        "--control", str(control), "--fpr", "0.1",
    ) == 0
    result = json.loads(capsys.readouterr().out)
    assert set(result) == {"gamma", "power"}


def test_cli_ml_verifier_roundtrip(tmp_path, capsys):
    data = tmp_path / "d.csv"
    run_cli(
        "synth", "--rows", "120", "--features", "3", "--seed", "2",
        "--duplicates", "0", "--outliers", "0", "--missing", "0",
        "--output", str(data),
    )
    model = tmp_path / "m.json"
    run_cli("train", "--input", str(data), "--arch", "logreg", "--output", str(model))
    q = tmp_path / "q.csv"
    run_cli(
        "synth", "--rows", "10", "--features", "3", "--seed", "8",
        "--duplicates", "0", "--outliers", "0", "--missing", "0",
        "--output", str(q),
    )
    ra = tmp_path / "ra.csv"
    rb = tmp_path / "rb.csv"
    run_cli("respond", "--model", str(model), "--queries", str(q),
            "--num-samples", "200", "--seed", "3", "--output", str(ra))
    # different explainer seed gives a distinct but same-shape response set
    run_cli("respond", "--model", str(model), "--queries", str(q),
            "--num-samples", "200", "--seed", "4", "--output", str(rb))
    verifier = tmp_path / "v.json"
    assert run_cli(
        "fit-verifier", "--method", "ml", "--task", "binary",
        "--responses", f"0={ra}", "--responses", f"1={rb}",
        "--arch", "rforest", "--seed", "1", "--output", str(verifier),
    ) == 0
    capsys.readouterr()
    assert run_cli("verify", "--verifier", str(verifier), "--target", str(ra)) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["task"] == "binary"
    assert set(verdict) >= {"class_id", "is_proper", "votes", "confidence"}


def test_cli_exit_codes(tmp_path, capsys):
    # config error: nonsense epsilon
    data = tmp_path / "d.csv"
    run_cli(
        "synth", "--rows", "20", "--features", "2", "--seed", "0",
        "--duplicates", "0", "--outliers", "0", "--missing", "0",
        "--output", str(data),
    )
    assert run_cli(
        "privatize", "--input", str(data), "--epsilon", "many",
        "--output", str(tmp_path / "x.csv"),
    ) == 2
    # data error: missing input file
    assert run_cli(
        "privatize", "--input", str(tmp_path / "nope.csv"), "--epsilon", "1",
        "--output", str(tmp_path / "x.csv"),
    ) == 3
    # config error: pipeline mask outside the mode
    assert run_cli(
        "preprocess", "--input", str(data), "--pipeline", "0",
        "--mode", "paper-compat", "--output", str(tmp_path / "p.csv"),
    ) == 2
    capsys.readouterr()


def test_cli_experiment_runs_and_is_reproducible(tmp_path, capsys, monkeypatch):
    cfg = {
        "source": "synthetic",
        "synthetic": {"rows": 160, "features": 3, "classes": 2},
        "epsilon_grid": ["1.0", "inf"],
        "trials": 1,
        "query_count": 5,
        "background_size": 4,
        "lime_num_samples": 250,
        "master_seed": 5,
        "attack_group_size": 10,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out1 = tmp_path / "out1"
    out2 = tmp_path / "out2"
    assert run_cli("experiment", "--config", str(cfg_path), "--out-dir", str(out1)) == 0
    assert run_cli("experiment", "--config", str(cfg_path), "--out-dir", str(out2)) == 0
    r1 = open(out1 / "results.csv", "rb").read()
    r2 = open(out2 / "results.csv", "rb").read()
    assert r1 == r2
    assert (out1 / "verification_accuracy.svg").exists()
    assert (out1 / "attack_power.svg").exists()
    capsys.readouterr()

    # PPV_SEED overrides the configured master seed
    out3 = tmp_path / "out3"
    monkeypatch.setenv("PPV_SEED", "99")
    assert run_cli("experiment", "--config", str(cfg_path), "--out-dir", str(out3)) == 0
    meta = json.loads((out3 / "config.json").read_text())
    assert meta["master_seed"] == 99
    r3 = open(out3 / "results.csv", "rb").read()
    assert r3 != r1
    capsys.readouterr()


def test_cli_experiment_rejects_bad_config(tmp_path, capsys):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"nope": 1}))
    assert run_cli("experiment", "--config", str(cfg_path), "--out-dir", str(tmp_path / "o")) == 2
    capsys.readouterr()
