import csv
import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from oscl.cli import COMMANDS, canonical, golden_check, main, write_atomic

W = np.array([[0.75, 0.25], [0.25, 0.75]])
SYM = (0.5 * W[:, :, None] * W[:, None, :]).tolist()
GOLDEN_DIR = Path(__file__).parent / "golden"


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def test_malformed_json_exits_1_without_output(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", '{"p_xym": [1, }')
    out = tmp_path / "report.json"
    assert run("task1", "--config", cfg, "--out", out) == 1
    assert not out.exists() and list(tmp_path.iterdir()) == [tmp_path / "bad.json"]
    assert "malformed JSON" in capsys.readouterr().err


def test_schema_errors_name_the_path(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"p_xym": SYM, "eps": 1.5, "delta": 0.2, "R": -1, "extra": 1})
    assert run("task1", "--config", cfg) == 1
    err = capsys.readouterr().err
    assert "$.eps:" in err and "$.R:" in err and "'extra' was unexpected" in err


def test_nested_distribution_errors_are_located(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", {"p": {"axes": [{"name": "X", "symbols": 2}], "probs": [0.5, -0.5]},
                                     "q": [0.5, 0.5]})
    assert run("measure", "--config", cfg) == 1
    assert "$.p" in capsys.readouterr().err


def test_runs_are_reproducible_and_worker_independent(tmp_path):
    cfg = write(tmp_path, "c.json", {"p_xym": SYM, "eps": 0.1, "delta": 0.25, "trials": 9000})
    outs = []
    for i, workers in enumerate((1, 1, 2)):
        out = tmp_path / f"r{i}.json"
        assert run("task1", "--config", cfg, "--seed", 4, "--workers", workers, "--out", out) == 0
        rep = json.loads(out.read_text())
        assert "wall_time" in rep
        rep.pop("wall_time")
        outs.append(canonical(rep))
    assert outs[0] == outs[1] == outs[2]


def test_env_worker_fallback(tmp_path, monkeypatch):
    cfg = write(tmp_path, "c.json", {"p_xym": SYM, "eps": 0.1, "delta": 0.25, "trials": 9000})
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("task1", "--config", cfg, "--no-wall-time", "--out", a) == 0
    monkeypatch.setenv("OSCL_WORKERS", "2")
    assert run("task1", "--config", cfg, "--no-wall-time", "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    monkeypatch.setenv("OSCL_WORKERS", "lots")
    assert run("task1", "--config", cfg, "--out", tmp_path / "c.json.out") == 1


def test_report_embeds_display_and_version(tmp_path):
    cfg = write(tmp_path, "c.json", {"p": [0.5, 0.5], "q": [0.25, 0.75], "eps_grid": [0.1]})
    out = tmp_path / "m.json"
    assert run("measure", "--config", cfg, "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["display"].startswith("D_s^eps") and rep["schema_version"] == "1.0.0"
    assert rep["result"]["dmax"] == pytest.approx(1.0)


def test_strict_premise_violation_exits_2(tmp_path):
    cfg = write(tmp_path, "c.json", {"p_xym": SYM, "eps": 0.1, "delta": 0.25, "R": 1, "r": 0, "trials": 200})
    assert run("task1", "--config", cfg, "--out", tmp_path / "a.json") == 0
    assert run("task1", "--config", cfg, "--strict", "--out", tmp_path / "b.json") == 2
    assert json.loads((tmp_path / "b.json").read_text())["premises_hold"] is False


def test_sweep_writes_ten_rows_with_trend_columns(tmp_path):
    spec = {"command": "task1", "base": {"p_xym": SYM, "eps": 0.1, "delta": 0.25, "r": 0},
            "grid": {"R": list(range(1, 11))}, "trials": 1000}
    out = tmp_path / "rows.csv"
    assert run("sweep", "--config", write(tmp_path, "s.json", spec), "--out", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert [int(r["R"]) for r in rows] == list(range(1, 11))
    for col in ("error_change", "nonincreasing_2sigma", "monotone_so_far", "empirical_error", "theorem_bound"):
        assert col in rows[0]
    errs = [float(r["empirical_error"]) for r in rows]
    changes = [float(r["error_change"]) for r in rows[1:]]
    assert np.allclose(np.diff(errs), changes)


def test_sweep_validates_every_point_first(tmp_path):
    spec = {"command": "task1", "base": {"p_xym": SYM, "eps": 0.1, "delta": 0.25}, "grid": {"R": [1, -2]}}
    out = tmp_path / "rows.csv"
    assert run("sweep", "--config", write(tmp_path, "s.json", spec), "--out", out) == 1
    assert not out.exists()


def test_every_command_has_a_schema():
    for name, cmd in COMMANDS.items():
        assert cmd.schema["type"] == "object" and cmd.schema["additionalProperties"] is False, name


def test_golden_empty_directory_passes_with_warning(tmp_path, capsys):
    assert run("golden-check", tmp_path) == 0
    assert "warning" in capsys.readouterr().err


def test_golden_round_trip_and_perturbed_seed(tmp_path, capsys):
    cfg_a = write(tmp_path, "a.json", {"p_xym": SYM, "eps": 0.1, "delta": 0.25, "trials": 500})
    cfg_b = write(tmp_path, "b.json", {"p": [0.5, 0.5], "q": [0.25, 0.75]})
    gold = tmp_path / "gold"
    assert run("task1", "--config", cfg_a, "--seed", 1, "--golden", "--out", gold / "t1.json") == 0
    assert run("measure", "--config", cfg_b, "--golden", "--out", gold / "m.json") == 0
    assert all(r["passed"] for r in golden_check(gold))
    rec = json.loads((gold / "t1.json").read_text())
    rec["seed"] = 2
    (gold / "t1.json").write_text(json.dumps(rec))
    results = {r["name"]: r for r in golden_check(gold)}
    assert results["m.json"]["passed"] and not results["t1.json"]["passed"]
    assert any(p.startswith("$.details") or p.startswith("$.empirical_error") or p.startswith("$.seed")
               for p in results["t1.json"]["diff"])
    assert run("golden-check", gold) == 1
    assert "FAIL t1.json" in capsys.readouterr().out


def test_repository_goldens_reproduce():
    results = golden_check(GOLDEN_DIR)
    assert results, "no golden files shipped"
    assert all(r["passed"] for r in results), [r for r in results if not r["passed"]]


def test_console_entry_point(tmp_path):
    exe = shutil.which("oscl")
    cmd = [exe] if exe else [sys.executable, "-m", "oscl.cli"]
    cfg = write(tmp_path, "c.json", {"p": [0.5, 0.5], "q": [0.5, 0.5]})
    proc = subprocess.run(cmd + ["measure", "--config", cfg, "--no-wall-time"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["result"]["kl"] == 0.0


def test_output_files_follow_the_umask(tmp_path):
    old = os.umask(0o022)
    try:
        write_atomic(tmp_path / "r.json", "{}\n")
    finally:
        os.umask(old)
    assert (tmp_path / "r.json").stat().st_mode & 0o777 == 0o644
    assert not list(tmp_path.glob(".*.tmp"))
