import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from localmodels import cli


def run(*args):
    return cli.main([str(a) for a in args])


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def test_shrink(capsys):
    assert run("shrink", "--measurements", "icosahedron") == 0
    assert "eta* = 0.794654" in capsys.readouterr().out


def test_lhs_certificate_and_verify(tmp_path, capsys):
    out = tmp_path / "w.json"
    assert run("lhs", "--family", "werner", "--params", 1.0, "--out", out) == 0
    text = capsys.readouterr().out
    assert "LHS level 1: q* = 0.42859" in text
    data = json.loads(out.read_text())
    assert data["kind"] == "lhs" and data["validation"]["passed"]
    assert abs(data["q_star"] - 0.4285926) < 1e-6
    assert data["config"]["command"] == "lhs" and "version" in data
    assert run("verify", out) == 0
    assert "all checks passed" in capsys.readouterr().out


def test_verify_detects_bit_flip(tmp_path, capsys):
    out = tmp_path / "w.json"
    assert run("lhs", "--family", "werner", "--params", 1.0, "--out", out) == 0
    data = json.loads(out.read_text())
    k = int(np.argmax([s[0] for s in data["sigma"]]))
    data["sigma"][k][0] *= -1
    bad = write(tmp_path / "bad.json", data)
    capsys.readouterr()
    assert run("verify", bad) == cli.EXIT_VERIFY
    assert "assemblage residual" in capsys.readouterr().out


def test_verify_detects_inflated_claim(tmp_path, capsys):
    out = tmp_path / "w.json"
    run("lhs", "--family", "werner", "--params", 1.0, "--out", out)
    data = json.loads(out.read_text())
    data["q_star"] = data["q_solver"] + 0.01
    assert run("verify", write(tmp_path / "c.json", data)) == cli.EXIT_VERIFY
    assert "claimed visibility" in capsys.readouterr().out


def test_separable_target_summary(capsys):
    assert run("lhs", "--family", "bell_diagonal", "--params", 0, 0, 0.9) == 0
    assert "LHS certified (q* >= 1)" in capsys.readouterr().out


def test_malformed_config(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", {"target": {"family": "werner"}, "levels": "three"})
    assert run("lhs", "--config", cfg) == cli.EXIT_CONFIG
    assert "levels" in capsys.readouterr().err
    assert run("lhs", "--config", tmp_path / "missing.json") == cli.EXIT_CONFIG
    assert run("bogus") == cli.EXIT_CONFIG


def test_unknown_schedule_is_config_error(tmp_path):
    cfg = write(tmp_path / "c.json", {"target": {"family": "werner", "params": [1]}, "schedule": "nope"})
    assert run("lhs", "--config", cfg) == cli.EXIT_CONFIG


def test_bounds_command(capsys):
    assert run("bounds", "--family", "colored_noise", "--params", 1.0, 0.39269908169872414) == 0
    out = capsys.readouterr().out
    assert "ppt_threshold: 0.3333333333" in out and "condj_threshold: 0.5645794553" in out


def test_lhv_exactify_and_verify(tmp_path, capsys):
    out = tmp_path / "v.json"
    cfg = write(tmp_path / "c.json", {"target": {"family": "werner", "params": [1.0]},
                                      "protocol": "basic", "exactify": True,
                                      "output": {"certificate": str(out)}})
    assert run("lhv", "--config", cfg) == 0
    rational = tmp_path / "v.rational.json"
    assert rational.exists()
    assert run("verify", rational) == 0
    data = json.loads(rational.read_text())
    data["weights"][0][2] = "1/2"
    assert run("verify", write(tmp_path / "r.json", data)) == cli.EXIT_VERIFY


def test_exactify_requires_basic_protocol_before_solving(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert run("lhv", "--family", "werner", "--exactify", "--out", out) == cli.EXIT_CONFIG
    assert "protocol basic" in capsys.readouterr().err
    assert not out.exists()


def test_verify_missing_file_is_config_error(tmp_path, capsys):
    assert run("verify", tmp_path / "absent.json") == cli.EXIT_CONFIG
    assert "cannot read certificate" in capsys.readouterr().err


def scan_cfg(tmp_path, name, **extra):
    return {"grid": {"family": "bell_diagonal", "param1": {"start": 0.0, "stop": 1.0, "num": 3}},
            "methods": ["ppt", "lhs", "steering_upper"], "levels": 1,
            "upper_bound_measurements": "icosahedron",
            "output": {"csv": str(tmp_path / f"{name}.csv")}, **extra}


def md5(p):
    return hashlib.md5(p.read_bytes()).hexdigest()


def test_scan_resumable_and_deterministic(tmp_path, capsys):
    cfg = write(tmp_path / "s.json", scan_cfg(tmp_path, "a"))
    assert run("scan", "--config", cfg) == 0
    a = tmp_path / "a.csv"
    first = md5(a)
    rows = list(csv.DictReader(a.open()))
    assert len(rows) == 9
    assert {r["method"] for r in rows} == {"ppt", "lhs", "steering_upper"}
    assert (tmp_path / "a.config.json").exists()
    # drop one point and resume: only it is recomputed, bytes identical
    pts = sorted((tmp_path / "a.points").iterdir())
    pts[0].unlink()
    capsys.readouterr()
    assert run("scan", "--config", cfg) == 0
    assert "2 already done" in capsys.readouterr().out
    assert md5(a) == first
    # parallel run gives the same file
    cfg2 = write(tmp_path / "s2.json", scan_cfg(tmp_path, "b", workers=2))
    assert run("scan", "--config", cfg2) == 0
    assert md5(tmp_path / "b.csv") == first


def test_scan_sandwich_rows(tmp_path):
    cfg = write(tmp_path / "s.json", scan_cfg(tmp_path, "c"))
    run("scan", "--config", cfg)
    rows = list(csv.DictReader((tmp_path / "c.csv").open()))
    by = {}
    for r in rows:
        by.setdefault(r["param1"], {})[r["method"]] = float(r["q_star"])
    for v in by.values():
        assert v["ppt"] - 1e-6 <= v["lhs"] <= v["steering_upper"] + 1e-6


def test_empty_grid(tmp_path):
    cfg = scan_cfg(tmp_path, "e")
    cfg["grid"]["param1"] = []
    assert run("scan", "--config", write(tmp_path / "s.json", cfg)) == cli.EXIT_CONFIG


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "localmodels", "shrink", "--measurements", "octahedron"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "eta* = 0.577350" in r.stdout


def test_env_tolerance_override():
    cfg = cli.resolve_config({"command": "lhs", "target": {"family": "werner", "params": [1]}},
                             env={cli.ENV_TOL: "1e-7"})
    assert cfg["tolerance"] == 1e-7
