import csv
import json

import pytest

from defectlab.cli import main

SIM = "model = bosonic_type2\nL = 3\nn = 151\ndt = 0.008\nT = 0.5\nmu_re = 1\nkappa = 0\ntolerance = 1e-6\n"
STUDY = "levels = 33,65,129\n"


@pytest.fixture
def cfg(tmp_path):
    def make(text, name="run.cfg"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return make


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_verify_algebra_pass(tmp_path, capsys):
    out = tmp_path / "va"
    assert main(["verify-algebra", "--cases", "100", "--out", str(out)]) == 0
    m = manifest(out)
    assert m["command"] == "verify-algebra" and all(m["criteria"].values())
    assert "[PASS]" in capsys.readouterr().out


def test_verify_algebra_perturbed_fails(tmp_path, capsys):
    assert main(["verify-algebra", "--cases", "50", "--perturb", "--out", str(tmp_path / "va")]) == 1
    assert "[FAIL]" in capsys.readouterr().out


def test_verify_algebra_more_generators(tmp_path):
    assert main(["verify-algebra", "--cases", "50", "--generators", "8", "--out", str(tmp_path / "va")]) == 0


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main(["backlund", "sideways"]) == 2
    assert main(["backlund", "bosonic", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path)]) == 2
    capsys.readouterr()


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_backlund_bosonic(tmp_path, cfg):
    out = tmp_path / "bk"
    assert main(["backlund", "bosonic", "--config", cfg(STUDY), "--out", str(out)]) == 0
    m = manifest(out)
    assert m["config"]["resolved"]["levels"] == [33, 65, 129]
    for key, path in m["outputs"].items():
        assert (tmp_path / "bk" / path.split("/")[-1]).exists(), key
    rows = list(csv.reader(open(out / "table_type2.csv")))
    assert rows[0] == ["quantity", "n=33", "n=65", "n=129", "slope"]


def test_backlund_bad_config_key(tmp_path, cfg):
    assert main(["backlund", "bosonic", "--config", cfg("colour = red\n"), "--out", str(tmp_path)]) == 2


def test_kmatrix_zero_lambda_exit_2(tmp_path, cfg):
    assert main(["kmatrix", "bosonic_first", "--config", cfg("lambda = 0\n"), "--out", str(tmp_path)]) == 2


def test_simulate_writes_series_and_manifest(tmp_path, cfg):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg(SIM), "--out", str(out)]) == 0
    m = manifest(out)
    assert set(m["outputs"]) == {"csv", "json", "manifest"}
    assert m["config"]["resolved"]["n"] == 151
    assert {"command", "config", "code_version", "started", "finished", "outputs", "criteria",
            "environment"} <= set(m)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"]


def test_simulate_negative_control(tmp_path, cfg, capsys):
    code = main(["simulate", "--config", cfg(SIM), "--disable-defect-terms", "--out", str(tmp_path / "nc")])
    assert code == 0
    assert "negative control passed" in capsys.readouterr().out


def test_simulate_zero_time(tmp_path, cfg):
    out = tmp_path / "t0"
    assert main(["simulate", "--config", cfg(SIM.replace("T = 0.5", "T = 0")), "--out", str(out)]) == 0
    assert len((out / "series.csv").read_text().splitlines()) == 2


def test_simulate_cfl_exit_2(tmp_path, cfg):
    assert main(["simulate", "--config", cfg(SIM.replace("dt = 0.008", "dt = 0.1")), "--out", str(tmp_path)]) == 2


def test_reruns_identical_except_timestamps(tmp_path, cfg):
    out = tmp_path / "same"
    c = cfg(SIM)
    snapshots = []
    for _ in range(2):
        assert main(["simulate", "--config", c, "--out", str(out)]) == 0
        snap = {p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.json"}
        m = manifest(out)
        del m["started"], m["finished"]
        snapshots.append((snap, m))
    assert snapshots[0] == snapshots[1]


def test_backlund_reruns_identical(tmp_path, cfg):
    c = cfg(STUDY)
    reports = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["backlund", "bosonic", "--config", c, "--out", str(out)]) == 0
        reports.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "manifest.json"})
    assert reports[0] == reports[1]
