import csv
import json
import subprocess
import sys

import pytest

from fragfl.cli import CSV_HEADER, main


def test_commtime_prints_table_value(capsys):
    rc = main(["commtime", "--framework", "ffl", "--model-bits", "699200", "--down", "31.01", "--up", "8.66", "--latency", "0.029"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "0.6018"


def test_commtime_json(capsys):
    main(["commtime", "--framework", "brea", "--model-bits", "699200", "--down", "31.01", "--up", "8.66",
          "--latency", "0.029", "--participants", "100000", "--json"])
    out = json.loads(capsys.readouterr().out)
    assert round(out["total_s"], 4) == 21948.3658


def test_commtime_bad_speed(capsys):
    rc = main(["commtime", "--framework", "fl", "--model-bits", "1", "--down", "0", "--up", "1", "--latency", "0"])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_run_writes_report_and_csv(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("K: 8\nT: 2\nmodel: {kind: softmax}\ndataset: {n_train: 400, n_test: 100, d: 4}\n")
    out, table = tmp_path / "r.json", tmp_path / "r.csv"
    rc = main(["run", "--config", str(cfg), "--defense", "ffl", "--attack", "gaussian", "--sigma", "0.5",
               "--strategy", "1", "--out", str(out), "--csv", str(table)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert len(report["rounds"]) == 2
    assert report["config"]["attack"]["sigma"] == 0.5
    rows = list(csv.reader(table.open()))
    assert tuple(rows[0]) == CSV_HEADER and len(rows) == 3


def test_run_flip_and_percent(tmp_path):
    out = tmp_path / "r.json"
    rc = main(["run", "--rounds", "1", "--flip", "1:0", "--attackers", "10", "--out", str(out)])
    assert rc == 0
    attack = json.loads(out.read_text())["config"]["attack"]
    assert attack["kind"] == "label_flip" and attack["attacker_fraction"] == 0.1


@pytest.mark.parametrize(
    "argv",
    [["run", "--defense", "nope", "--out", "x.json"], ["run", "--attackers", "50", "--out", "x.json"]],
)
def test_run_usage_errors(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    assert "fragfl run: error" in capsys.readouterr().err


def test_run_missing_config(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "r.json")]) == 2


def test_attack_demo_ffl(capsys):
    assert main(["attack-demo", "--method", "analytic", "--source", "ffl", "--seeds", "5"]) == 0
    row = capsys.readouterr().out.strip().splitlines()[-1].split()
    assert row[:2] == ["analytic", "FFL"] and float(row[2]) >= 0.5


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "fragfl.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("run", "commtime", "attack-demo"):
        assert cmd in res.stdout


def test_run_report_bytes_reproducible(tmp_path):
    # fresh server keys per invocation; the report must not depend on them
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["run", "--rounds", "2", "--attack", "gaussian", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
