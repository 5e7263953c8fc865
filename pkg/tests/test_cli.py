import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ecgpd.cli import main, read_config_file

SMALL = ["--n", "600", "--n-validation", "300", "--n-test", "300"]
FAST_TRAIN = ["--learning-rates", "0.2", "--depths", "2", "--n-estimators", "40"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    out = str(d)
    assert main(["synth", "--seed", "7", "--out", out, *SMALL]) == 0
    assert main(["train", "--out", out, "--family", "gbdt", "--jobs", "1", *FAST_TRAIN]) == 0
    assert main(["evaluate", "--out", out, "--n-resamples", "200", "--jobs", "1"]) == 0
    return d


def test_synth_train_evaluate(pipeline):
    rep = json.loads((pipeline / "report.json").read_text())
    assert set(rep["metrics"]) == {"auroc", "auprc", "f1"}
    for m in rep["metrics"].values():
        assert m["ci_low"] <= m["point"] <= m["ci_high"]
    assert rep["seed"] == 7  # inherited root seed
    roc = (pipeline / "roc.csv").read_text().splitlines()
    assert roc[0] == "fpr,tpr" and roc[1] == "0.0,0.0" and roc[-1] == "1.0,1.0"
    assert (pipeline / "pr.csv").read_text().startswith("recall,precision")


def test_manifest(pipeline):
    m = json.loads((pipeline / "manifest.json").read_text())
    assert set(m["runs"]) == {"synth", "train", "evaluate"}
    ev = m["runs"]["evaluate"]
    assert ev["seed"] == 7 and ev["catalog_version"] == "ptbxl71-v1"
    assert len(ev["config_hash"]) == 64 and "report.json" in ev["artifacts"]
    rep = json.loads((pipeline / "report.json").read_text())
    assert rep["config_hash"] == ev["config_hash"]


def test_explain_local_additivity(pipeline):
    out = str(pipeline)
    rid = [line.split(",")[0] for line in (pipeline / "cohort.csv").read_text().splitlines() if "internal_test" in line][0]
    assert main(["explain", "--out", out, "--record", rid, "--ranking", "shap"]) == 0
    doc = json.loads((pipeline / f"shap_local_{rid}.json").read_text())
    total = doc["base_value"] + sum(doc["phi"].values())
    assert abs(total - doc["margin"]) <= 1e-9
    assert abs(sum(r["phi"] for r in doc["rows"]) + doc["base_value"] - doc["margin"]) <= 1e-9
    summ = json.loads((pipeline / "shap_summary.json").read_text())
    assert summ["max_additivity_error"] <= 1e-9
    assert (pipeline / "shap_global.csv").exists() and (pipeline / "shap_beeswarm.csv").exists()


def test_single_subgroup_sweep(pipeline):
    out = str(pipeline)
    assert main(["single", "--out", out, "--n-resamples", "50", "--jobs", "1"]) == 0
    ranking = json.loads((pipeline / "ranking.json").read_text())["codes"]
    assert len(ranking) == 71
    assert main(["subgroup", "--out", out, "--n-resamples", "30", "--jobs", "1"]) == 0
    sub = json.loads((pipeline / "subgroups.json").read_text())
    assert {s["dimension"] for s in sub["strata"]} == {"shd", "vhd", "age", "sex", "race", "context"}
    assert main(["sweep", "--out", out, "--use-model", "--ks", "1,71", "--n-resamples", "30", "--jobs", "1"]) == 0
    rows = (pipeline / "sweep.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[0].startswith("k,auroc,auprc,f1")
    rep = json.loads((pipeline / "report.json").read_text())
    k71 = rows[2].split(",")
    assert float(k71[1]) == rep["metrics"]["auroc"]["point"]


def test_usage_errors(tmp_path, capsys):
    assert main(["train", "--bogus"]) == 2
    err = capsys.readouterr().err
    assert "usage" in err and json.loads(err.strip().splitlines()[-1])["error"] == "UsageError"
    assert main(["frobnicate"]) == 2
    assert main(["synth", "--out", str(tmp_path / "x")]) == 2  # no seed anywhere


def test_validation_and_io_errors(tmp_path, capsys):
    assert main(["evaluate", "--out", str(tmp_path), "--seed", "1"]) == 3
    assert json.loads(capsys.readouterr().err)["error"] == "IoError"
    assert main(["synth", "--out", str(tmp_path), "--seed", "1", "--n", "50", "--prevalence", "2"]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "InvalidSpec"


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nn = 120\nseed = 3\nn_validation = 40\nn_test = 40\n")
    assert read_config_file(cfg)["n"] == "120"
    out = tmp_path / "o"
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    truth = json.loads((out / "truth.json").read_text())
    assert truth["spec"]["split_sizes"]["train"] == 120 and truth["spec"]["seed"] == 3
    assert main(["synth", "--config", str(cfg), "--seed", "4", "--out", str(out)]) == 0
    assert json.loads((out / "truth.json").read_text())["spec"]["seed"] == 4
    cfg.write_text("unknown_key = 1\n")
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 2


def test_rerun_reproduces_checksums(tmp_path):
    sums = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["synth", "--seed", "5", "--out", out, "--n", "200", "--n-validation", "80", "--n-test", "80"]) == 0
        m = json.loads((tmp_path / name / "manifest.json").read_text())
        sums.append((m["config_hash"], m["artifacts"]))
    assert sums[0] == sums[1]


def test_label_notes_features(tmp_path):
    day = 86400
    (tmp_path / "echo.csv").write_text(f"patient_id,echo_time,ef_percent\np1,{100 * day},35\np2,{100 * day},60\n")
    (tmp_path / "ecg.csv").write_text("patient_id,record_id,ecg_time\np1,e1,0\np2,e2,0\np3,e3,0\n")
    out = str(tmp_path / "o")
    assert main(["label", "--echo", str(tmp_path / "echo.csv"), "--ecg", str(tmp_path / "ecg.csv"), "--out", out]) == 0
    lab = (tmp_path / "o" / "labels.csv").read_text().splitlines()
    assert [line.split(",")[1:4:2] for line in lab[1:]] == [["e1", "1"], ["e2", "0"]]

    notes = [
        {"note_id": "n1", "patient_id": "p1", "note_time": 2 * day, "text": "TTE: LVEF 30%"},
        {"note_id": "n2", "patient_id": "p1", "note_time": 9 * day, "text": "TTE: LVEF 60%"},
        {"note_id": "n3", "patient_id": "p2", "note_time": 1 * day, "text": "no imaging"},
    ]
    (tmp_path / "notes.jsonl").write_text("".join(json.dumps(n) + "\n" for n in notes))
    assert main(["notes", "--notes", str(tmp_path / "notes.jsonl"), "--ecgs", str(tmp_path / "ecg.csv"), "--out", out]) == 0
    pairs = (tmp_path / "o" / "note_pairs.csv").read_text().splitlines()
    assert len(pairs) == 2 and pairs[1].startswith("p1,e1,n1")

    (tmp_path / "m.csv").write_text("record_id,age,sex,t_p_onset,t_qrs_onset,t_qrs_end,t_t_end,rr\nr1,70,female,0,160,250,560,640\n")
    assert main(["features", "--measurements", str(tmp_path / "m.csv"), "--out", out]) == 0
    row = (tmp_path / "o" / "baseline_features.csv").read_text().splitlines()[1].split(",")
    assert float(row[5]) == 500.0


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ecgpd", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "ecgpd" in r.stdout
    r = subprocess.run([sys.executable, "-m", "ecgpd", "train", "--nope"], capture_output=True, text=True)
    assert r.returncode == 2 and "usage:" in r.stderr
