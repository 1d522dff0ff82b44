import json
import shutil

import pytest

from gazemark.golden import DEFAULT_ROOT, main, run_fixture, run_golden_suite


@pytest.mark.parametrize("name", sorted(p.name for p in DEFAULT_ROOT.iterdir() if (p / "fixture.json").is_file()))
def test_fixture(name):
    result = run_fixture(DEFAULT_ROOT / name)
    assert result.passed, result.line()


def test_suite_entry_point(capsys):
    assert main([str(DEFAULT_ROOT)]) == 0
    assert capsys.readouterr().out.count("PASS") == len(run_golden_suite(DEFAULT_ROOT))


def test_empty_root_fails(tmp_path, capsys):
    assert main([str(tmp_path)]) == 1
    assert "no fixtures found" in capsys.readouterr().out


def test_tampered_expected_fails(tmp_path):
    shutil.copytree(DEFAULT_ROOT / "table1_rspan", tmp_path / "t")
    path = tmp_path / "t" / "expected" / "rspan_scores.csv"
    path.write_text(path.read_text().replace("0.86", "0.87"))
    result = run_fixture(tmp_path / "t")
    assert not result.passed and "0.87" in result.line()


def test_unknown_kind(tmp_path):
    (tmp_path / "f").mkdir()
    (tmp_path / "f" / "fixture.json").write_text(json.dumps({"kind": "nope"}))
    assert not run_golden_suite(tmp_path)[0].passed
