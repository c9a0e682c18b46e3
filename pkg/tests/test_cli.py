import csv
import json
from pathlib import Path

import pytest

from tendonsim.cli import main

GOLDEN = Path(__file__).parent / "golden"


def _header(path):
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if row and not row[0].startswith("#"):
                return row
    return []


@pytest.fixture(scope="module")
def force_log(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--out", str(out), "--set", "scenario=force-step",
                 "--set", "n_sub=2"]) == 0
    return out / "log.csv"


def test_log_schema_matches_golden(force_log):
    want = (GOLDEN / "log_columns.txt").read_text().split()
    want += ["F_base_0", "F_base_1", "dl_base_0", "dl_base_1"]
    assert _header(force_log) == want


def test_manifest_written(force_log):
    doc = json.loads((force_log.parent / "run_manifest.json").read_text())
    assert doc["argv"][0] == "simulate"
    assert "scenario = force-step" in doc["config"]


def test_force_step_report(force_log, tmp_path, capsys):
    assert main(["report", "--kind", "force-step", "--input", str(force_log),
                 "--out", str(tmp_path)]) == 0
    heads = json.loads((GOLDEN / "report_headers.json").read_text())["force-step"]
    for name, cols in heads.items():
        assert _header(tmp_path / name) == cols
    text = capsys.readouterr().out
    assert "delay_full_ms = 19" in text and "delay_base_ms = 0" in text


@pytest.mark.parametrize("kind", ["extreme-curl", "period", "detection"])
def test_other_log_reports_schema(force_log, tmp_path, kind):
    assert main(["report", "--kind", kind, "--input", str(force_log), "--out", str(tmp_path)]) == 0
    heads = json.loads((GOLDEN / "report_headers.json").read_text())[kind]
    for name, cols in heads.items():
        assert _header(tmp_path / name) == cols
    assert (tmp_path / "summary.txt").exists()


def test_table_reports_schema(tmp_path):
    sens = tmp_path / "sens.csv"
    sens.write_text("link,shift\n2,0.01\n12,0.1\n23,1.0\n")
    size = tmp_path / "pred.csv"
    size.write_text("sample_id,D_true,D_pred\na,0.01,0.011\nb,0.02,0.019\n")
    heads = json.loads((GOLDEN / "report_headers.json").read_text())
    for kind, src in (("sensitivity", sens), ("size", size)):
        out = tmp_path / kind
        assert main(["report", "--kind", kind, "--input", str(src), "--out", str(out)]) == 0
        for name, cols in heads[kind].items():
            assert _header(out / name) == cols


@pytest.mark.parametrize("argv, code", [
    (["simulate", "--set", "scenario=nope"], 3),
    (["simulate", "--set", "dt=-1", "--set", "scenario=force-step"], 3),
    (["simulate", "--bogus"], 2),
    (["report", "--kind", "force-step", "--input", "/nonexistent/log.csv"], 5),
    (["predict", "--model", "/nonexistent", "--sample", "/nonexistent.csv"], 5),
])
def test_exit_codes(argv, code, tmp_path, monkeypatch):
    monkeypatch.setenv("TENDONSIM_OUT", str(tmp_path))
    assert main(argv) == code


def test_empty_log_lists_missing_columns(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text("# tendonsim log schema 1\n")
    assert main(["report", "--kind", "period", "--input", str(p), "--out", str(tmp_path)]) == 5
    assert "i_obs_dstar_filt_0" in capsys.readouterr().err


def test_default_output_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TENDONSIM_OUT", str(tmp_path))
    assert main(["simulate", "--set", "scenario=force-step", "--set", "duration=0.05"]) == 0
    assert (tmp_path / "simulate" / "log.csv").exists()


def test_dataset_train_predict(tmp_path, capsys):
    data, model = tmp_path / "data", tmp_path / "model"
    assert main(["gen-dataset", "--diameters", "20,40", "--reps", "3", "--out", str(data)]) == 0
    assert len(list(data.glob("d*_r*.csv"))) == 6
    assert main(["train", "--data", str(data), "--folds", "3", "--out", str(model)]) == 0
    capsys.readouterr()
    assert main(["predict", "--model", str(model), "--sample", str(data / "d020_r01.csv"),
                 "--out", str(tmp_path / "pred")]) == 0
    text = capsys.readouterr().out
    assert "D_pred = " in text and "D_true = 20.000 mm" in text
