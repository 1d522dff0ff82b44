import os
import subprocess
import sys
from pathlib import Path

import pytest

from gazemark.cli import main

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"
SMALL = ["--n-per-group", "2", "--classifiers", "tree_c45_like,instance_knn", "--feature-set", "saccade,aoi-sentence",
         "--k", "3"]


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path), "--seed", "3"]) == 0
    rows = (tmp_path / "participants.csv").read_text().splitlines()
    assert len(rows) == 15
    assert "14 participants" in capsys.readouterr().out


def test_stages_chain(tmp_path):
    syn = tmp_path / "syn"
    assert main(["synth", "--out", str(syn), "--n-per-group", "2"]) == 0
    assert main(["ingest", "--out", str(tmp_path / "ing"), "--gaze", str(syn / "gaze.csv"),
                 "--participants", str(syn / "participants.csv")]) == 0
    assert main(["detect", "--out", str(tmp_path / "det"), "--gaze", str(syn / "gaze.csv")]) == 0
    events = tmp_path / "det" / "events.csv"
    assert main(["mainseq", "--out", str(tmp_path / "ms"), "--events", str(events),
                 "--participants", str(syn / "participants.csv")]) == 0
    assert (tmp_path / "ms" / "mainseq_report.csv").is_file()
    assert main(["features", "--out", str(tmp_path / "ft"), "--events", str(events), "--aois", str(syn / "aois.csv"),
                 "--participants", str(syn / "participants.csv"), "--feature-set", "fixation", "--format", "arff"]) == 0
    table = tmp_path / "ft" / "features_fixation_sentence.arff"
    assert table.is_file()
    assert main(["classify", "--out", str(tmp_path / "cl"), "--table", str(table),
                 "--classifiers", "logistic", "--k", "4"]) == 0
    assert (tmp_path / "cl" / "report_fixation.csv").read_text().startswith("Classifier,Precision")


def test_report_table1(tmp_path, capsys):
    inp = FIXTURES / "table1_rspan" / "inputs"
    assert main(["report", "--out", str(tmp_path), "--recall-log", str(inp / "recall_log.csv"),
                 "--participants", str(inp / "participants.csv")]) == 0
    assert "t=1.5734 df=12.00" in capsys.readouterr().out
    assert (tmp_path / "rspan_scores.csv").read_text().splitlines()[1].startswith("3,18,female,0.86")


def test_single_class_table(tmp_path, capsys):
    table = tmp_path / "features_fixation_sentence.csv"
    rows = ["participant_id,instance_id,gender,fixation_count,label"]
    rows += [f"A{i},S01,female,{i}.0,ADHD" for i in range(20)]
    table.write_text("\n".join(rows) + "\n")
    out = tmp_path / "out"
    assert main(["classify", "--out", str(out), "--table", str(table), "--classifiers", "logistic"]) == 2
    assert "TooFewInstances" in capsys.readouterr().err
    assert not out.exists()


def test_failure_leaves_no_partial_output(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    bad = tmp_path / "gaze.csv"
    bad.write_text("participant_id,stimulus_id,t_ms,x_px\n")
    assert main(["detect", "--out", str(out), "--gaze", str(bad)]) == 2
    assert sorted(p.name for p in out.iterdir()) == ["keep.txt"]


@pytest.mark.parametrize("argv", [
    ["pipeline", "--out", "x", "--bogus"],
    ["detect", "--out", "x"],
    ["classify", "--out", "x", "--table", "t.csv", "--k", "1"],
    ["pipeline", "--out", "x", "--classifiers", "svm"],
    [],
])
def test_usage_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 1
    assert list(tmp_path.iterdir()) == []


def test_missing_file_is_data_error(tmp_path):
    assert main(["detect", "--out", str(tmp_path / "o"), "--gaze", str(tmp_path / "nope.csv")]) == 2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nn_per_group = 1\nseed = 5\nfixation_speed_dps = 25\n")
    assert main(["synth", "--out", str(tmp_path / "a"), "--config", str(cfg)]) == 0
    assert len((tmp_path / "a" / "participants.csv").read_text().splitlines()) == 3
    assert main(["synth", "--out", str(tmp_path / "b"), "--config", str(cfg), "--n-per-group", "2"]) == 0
    assert len((tmp_path / "b" / "participants.csv").read_text().splitlines()) == 5
    cfg.write_text("colour = blue\n")
    assert main(["synth", "--out", str(tmp_path / "c"), "--config", str(cfg)]) == 1


def test_help_lists_flags():
    res = subprocess.run([sys.executable, "-m", "gazemark.cli", "pipeline", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for flag in ("--config", "--out", "--seed", "--gaze", "--velocity-threshold", "--feature-set", "--classifiers",
                 "--k", "--grid-search", "--n-per-group", "--effects", "--recall-log"):
        assert flag in res.stdout
    res = subprocess.run([sys.executable, "-m", "gazemark.cli", "--help"], capture_output=True, text=True)
    for cmd in ("ingest", "detect", "mainseq", "features", "classify", "synth", "report", "pipeline"):
        assert cmd in res.stdout


def test_pipeline_deterministic_and_thread_independent(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    argv = ["pipeline", "--seed", "11", *SMALL]
    assert main([*argv, "--out", "run1"]) == 0
    assert main([*argv, "--out", "run2"]) == 0
    monkeypatch.setenv("GAZEMARK_THREADS", "4")
    assert main([*argv, "--out", "run3"]) == 0
    first = tree(tmp_path / "run1")
    assert first == tree(tmp_path / "run2") == tree(tmp_path / "run3")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["run1", "run2", "run3"]
    assert "detection_eval.csv" in first and "classify/report_saccade.csv" in first


def test_bad_thread_budget(tmp_path, monkeypatch):
    monkeypatch.setenv("GAZEMARK_THREADS", "zero")
    table = tmp_path / "features_fixation_sentence.csv"
    rows = ["participant_id,instance_id,gender,fixation_count,label"]
    rows += [f"P{i},S01,female,{i}.0,{'ADHD' if i % 2 else 'NonADHD'}" for i in range(20)]
    table.write_text("\n".join(rows) + "\n")
    assert main(["classify", "--out", str(tmp_path / "o"), "--table", str(table), "--classifiers", "logistic"]) == 2
