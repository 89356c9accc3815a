import json
import os
import subprocess
import sys

import pytest

from qtwo.harness import checks
from qtwo.harness.checks import CheckResult, DETERMINISM_CONFIGS
from qtwo.harness.cli import main
from qtwo.harness.config import ParseError, ValidationError, dump_config, parse_config_text
from qtwo.harness.records import RecordError, export_csv, read_records, validate_record, write_records

BOHM = DETERMINISM_CONFIGS["bohm"]


def test_validation_reports_every_error_at_once():
    text = ("model: grw\nseed: -1\nbogus: 1\ngrw: {lambda: -2.0, sigma: 0.0, T: 1.0}\n"
            "snapshots: [5.0]\n")
    with pytest.raises(ValidationError) as info:
        parse_config_text(text)
    errs = "\n".join(info.value.errors)
    for needle in ("seed", "bogus", "lambda", "sigma", "snapshots"):
        assert needle in errs


def test_unknown_model_rejected():
    with pytest.raises(ValidationError):
        parse_config_text("model: copenhagen\n")


def test_parse_error_has_position():
    with pytest.raises(ParseError) as info:
        parse_config_text("model: bohm\nbohm: {T: [1.0\n")
    assert info.value.line is not None and info.value.column is not None


def test_dump_load_round_trip_and_hash():
    cfg = parse_config_text(BOHM)
    again = parse_config_text(dump_config(cfg))
    assert again == cfg and again.hash() == cfg.hash()
    assert cfg.with_overrides(threads=4, out="/elsewhere").hash() == cfg.hash()
    assert cfg.with_overrides(seed=99).hash() != cfg.hash()


def test_record_validation():
    validate_record({"run": 0, "t": 1.0, "x": [0.5], "label": 1}, "flash")
    bad = [
        {"run": 0, "t": 1.0, "x": [0.5]},
        {"run": 0, "t": float("nan"), "x": [0.5], "label": 1},
        {"run": True, "t": 1.0, "x": [0.5], "label": 1},
        {"run": 0, "t": 1.0, "x": [0.5], "label": 0},
        {"run": 0, "t": 1.0, "x": ["a"], "label": 1},
    ]
    for rec in bad:
        with pytest.raises(RecordError):
            validate_record(rec, "flash")


def test_records_round_trip_and_csv(tmp_path):
    recs = [{"run": i, "t": 0.5 * i, "q": [float(i), -1.0]} for i in range(4)]
    write_records(recs, tmp_path / "traj.jsonl", "trajectory")
    assert read_records(tmp_path / "traj.jsonl", "trajectory") == recs
    export_csv(recs, "trajectory", tmp_path / "traj.csv")
    lines = (tmp_path / "traj.csv").read_text().splitlines()
    assert lines[0] == "run,t,q0,q1" and len(lines) == 5


def _write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_simulate_export_and_overrides(tmp_path, capsys):
    cfg = _write(tmp_path, BOHM)
    assert main(["simulate", "bohm", "--config", cfg, "--out", str(tmp_path / "a"), "--quiet"]) == 0
    assert main(["simulate", "bohm", "--config", cfg, "--out", str(tmp_path / "b"),
                 "--seed", "77", "--quiet"]) == 0
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    sha = [{o["kind"]: o["sha256"] for o in m["outputs"]} for m in (ma, mb)]
    assert mb["seed"] == 77
    assert sha[0]["trajectory"] != sha[1]["trajectory"] and sha[0]["density"] == sha[1]["density"]
    assert "wall_time_s" not in ma and (tmp_path / "a" / "timing.json").is_file()
    assert main(["export", str(tmp_path / "a"), "--out", str(tmp_path / "csv")]) == 0
    assert {p.suffix for p in (tmp_path / "csv").iterdir()} == {".csv"}


def test_default_output_directory_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("QTWO_OUT", str(tmp_path / "envout"))
    assert main(["simulate", "bohm", "--config", _write(tmp_path, BOHM), "--quiet"]) == 0
    (run,) = list((tmp_path / "envout").iterdir())
    assert run.name.startswith("bohm-") and (run / "manifest.json").is_file()


def test_exit_code_invalid_input(tmp_path):
    assert main(["simulate", "bohm", "--config", _write(tmp_path, "model: bohm\nbohm: {T: -1}\n")]) == 2
    assert main(["simulate", "grw", "--config", _write(tmp_path, BOHM)]) == 2
    assert main(["simulate", "bohm", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["simulate", "bohm", "--config", _write(tmp_path, BOHM), "--seed", "-3"]) == 2
    assert main(["simulate", "bohm", "--config", _write(tmp_path, BOHM), "--threads", "0"]) == 2
    assert main(["verify", "--level", "150"]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["export", str(tmp_path)]) == 2


def test_exit_code_run_failure(tmp_path):
    text = BOHM.replace("T: 1.0", "T: 1.0, node_guard: 1.0e+10")
    code = main(["simulate", "bohm", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")])
    assert code == 3


def test_exit_code_verify_failure(monkeypatch, capsys):
    monkeypatch.setattr(checks, "quick_suite",
                        lambda level: [CheckResult(1, "ok", True, []), CheckResult(2, "bad", False, ["x"])])
    assert main(["verify"]) == 4
    out = capsys.readouterr().out
    assert "FAIL" in out and "1/2 checks passed" in out


def test_arith_prints_exact_rate(capsys):
    assert main(["arith"]) == 0
    out = capsys.readouterr().out
    assert "= 100000000 /s" in out and "1E-8 s" in out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "qtwo", "arith"], capture_output=True, text=True,
                       env={**os.environ})
    assert r.returncode == 0 and "100000000" in r.stdout


def test_arith_converts_named_scales_and_rejects_garbage(capsys):
    assert main(["arith", "--convert", "3e-7", "sigma_m"]) == 0
    assert "3e-7 in units of sigma_m = 3" in capsys.readouterr().out
    assert main(["arith", "--particles", "abc"]) == 2
    assert main(["arith", "--lambda", "inf"]) == 2
