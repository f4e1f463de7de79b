import json

import numpy as np
import pytest

from dissipative_euler import io
from dissipative_euler.cli import main

from conftest import dominance_record


def write(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_solve_then_verify_steady_state(tmp_path, capsys):
    cfg = write(tmp_path, "[grid]\ncells = 32\n[initial]\nkind = constant\n[solver]\nend_time = 0.05\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    m = manifest(tmp_path / "s")
    assert m["verdicts"]["energy_ledger"] == "PASS"
    assert m["config"]["grid"]["cells"] == 32
    assert str(tmp_path / "run.ini") in m["inputs"]
    assert main(["verify", str(tmp_path / "s" / "record"), "--config", cfg, "--out", str(tmp_path / "v")]) == 0
    v = manifest(tmp_path / "v")
    assert v["verdicts"]["verify"] == "PASS" and v["verdicts"]["continuity_max"] < 1e-13
    assert io.verify_manifest(tmp_path / "v" / "manifest.json") == []
    assert "verify: ok" in capsys.readouterr().out


def test_sweep_outputs(tmp_path):
    cfg = write(tmp_path, "[grid]\ncells = 32\n[solver]\nend_time = 0.05\n[initial]\namplitude = 0.1\n"
                          "[defects]\nblock = 8\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "w"), "--threads", "2"]) == 0
    out = tmp_path / "w"
    for name in ("member_0", "member_1", "member_2", "consistency.csv", "sequence_defect.bin",
                 "sequence_pairings.csv"):
        assert (out / name).exists()
    m = manifest(out)
    assert {"consistency_decreasing", "consistency_bound", "bound_constant"} <= set(m["verdicts"])
    assert io.load_record(out / "member_2").grid.cells == 128
    assert io.verify_manifest(out / "manifest.json") == []


def test_defects_and_oscillate(tmp_path):
    cfg = write(tmp_path, "[grid]\ncells = 64\n[solver]\nend_time = 0.05\n[oscillation]\ncells = 32\nn_max = 3\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert main(["defects", str(tmp_path / "s" / "record"), "--config", cfg, "--out", str(tmp_path / "d")]) == 0
    d = manifest(tmp_path / "d")
    assert d["verdicts"]["gronwall"] == "PASS"
    assert io.load_record(tmp_path / "d" / "record").partition.block == 4
    assert main(["defects", str(tmp_path / "d" / "record"), "--out", str(tmp_path / "d2")]) == 1
    assert main(["oscillate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    o = manifest(tmp_path / "o")
    assert o["verdicts"]["separation"] == "SEPARATION"
    assert len(o["verdicts"]["decay_ratios"]) == 3


def test_select_on_constructed_dominance(tmp_path):
    dirs = []
    for k, w in enumerate([np.full(4, 0.1), np.full(4, 0.5), np.array([0.0, 0.9, 0.0, 0.9])]):
        d = tmp_path / f"r{k}"
        io.save_record(dominance_record(w), d)
        dirs.append(str(d))
    assert main(["select", *dirs, "--out", str(tmp_path / "sel")]) == 0
    m = manifest(tmp_path / "sel")
    assert m["verdicts"]["winner"] == 0 and m["verdicts"]["audit"] == "PASS"
    assert len(m["inputs"]) == 3 * len(list((tmp_path / "r0").iterdir()))
    _, rows = io.read_csv(tmp_path / "sel" / "selection.csv")
    assert [r[3] for r in rows] == ["winner", "precedes", "incomparable"]


def test_error_paths(tmp_path, capsys, monkeypatch):
    assert main(["verify", str(tmp_path / "nowhere"), "--out", str(tmp_path / "x")]) == 1
    assert "input not found" in capsys.readouterr().err
    bad = write(tmp_path, "[grid]\ncells = many\n")
    assert main(["solve", "--config", bad]) == 1
    assert f"{bad}:2:9:" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "none.ini")]) == 1
    assert main(["solve", "--seed", "-1", "--out", str(tmp_path / "x")]) == 1
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_default_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv("DEL_OUT_DIR", str(tmp_path / "runs"))
    cfg = write(tmp_path, "[oscillation]\ncells = 16\nn_max = 2\n")
    assert main(["oscillate", "--config", cfg]) == 0
    assert (tmp_path / "runs" / "oscillate" / "manifest.json").exists()
