import json
import math

import numpy as np
import pytest

from roughcb.cli import META_PREFIX, read_config, resolve, run


def _csv_rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return lines[0].split(","), [list(map(float, l.split(","))) for l in lines[1:]]


def test_scale_fn_example(capsys):
    assert run(["scale-fn", "--alpha", "0.5", "--b", "0", "--c", "1", "--t-max", "1", "--n-steps", "4"]) == 0
    out = capsys.readouterr().out
    header, rows = _csv_rows(out)
    assert header == ["t", "W", "Wp", "K", "LK"]
    assert len(rows) == 5
    assert rows[-1][1] == pytest.approx(1.1283792, abs=1e-7)
    assert out.startswith(META_PREFIX) and "\r" not in out


def test_unknown_flag(capsys):
    assert run(["scale-fn", "--bogus", "1"]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err and "--n-steps" in err
    assert run([]) == 1
    assert run(["no-such-command"]) == 1


def test_validation_exit(capsys):
    assert run(["scale-fn", "--alpha", "1.5"]) == 1
    assert run(["scale-fn", "--alpha", "abc"]) == 1


def test_verify_cf_forced_fail(tmp_path):
    out = tmp_path / "cf.json"
    code = run(["verify-cf", "--paths", "500", "--n-steps", "64", "--solver-steps", "256", "--tolerance", "0",
                "--sigmas", "0", "--out", str(out)])
    assert code == 3
    rep = json.loads(out.read_text())
    assert rep["result"]["verdict"] == "FAIL"
    assert list(rep) == ["metadata", "result"]


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nalpha = 0.75\nseed = 5\nn_steps=8\n")
    conf = read_config(cfg)
    monkeypatch.setenv("RCB_SEED", "99")
    r = resolve("simulate-sve", {"n_steps": "16"}, conf)
    assert r["alpha"] == 0.75 and r["n_steps"] == 16 and r["seed"] == 5 and r["b"] == 0.0
    r = resolve("simulate-sve", {}, {})
    assert r["seed"] == 99
    monkeypatch.delenv("RCB_SEED")
    assert resolve("simulate-sve", {}, {})["seed"] == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert run(["scale-fn", "--config", str(bad)]) == 1


@pytest.mark.parametrize("cmd", [
    ["simulate-sve", "--paths", "40", "--n-steps", "32", "--seed", "3"],
    ["simulate-sve", "--paths", "40", "--n-steps", "32", "--format", "json", "--exp-mean", "0.5", "--seed", "3"],
    ["simulate-cmj", "--paths", "40", "--n", "25", "--n-steps", "10", "--seed", "3"],
    ["simulate-cp", "--paths", "40", "--n-levels", "10", "--seed", "3"],
    ["solve-volterra", "--n-steps", "32", "--g-im", "0.5"],
    ["resolvent-convergence", "--steps", "500"],
])
def test_replay_and_threads(cmd, tmp_path):
    a, b, c = (tmp_path / n for n in ("a", "b", "c"))
    assert run(cmd + ["--threads", "1", "--out", str(a)]) == 0
    assert run(cmd + ["--threads", "4", "--out", str(b)]) == 0
    assert run(["replay", str(a), "--out", str(c), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_emit_jumps(tmp_path):
    out = tmp_path / "p.csv"
    assert run(["simulate-sve", "--paths", "3", "--n-steps", "32", "--seed", "1", "--emit-jumps", "--out",
                str(out)]) == 0
    header, rows = _csv_rows((tmp_path / "p.csv.jumps.csv").read_text())
    assert header == ["path", "time", "mark"] and rows
    plain = tmp_path / "q.csv"
    run(["simulate-sve", "--paths", "3", "--n-steps", "32", "--seed", "1", "--out", str(plain)])
    assert _csv_rows(out.read_text()) == _csv_rows(plain.read_text())
    assert run(["simulate-sve", "--emit-jumps"]) == 1


def test_json_reports(capsys):
    assert run(["fractional-check", "--n-steps", "256"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert list(rep["result"])[:3] == ["residual_norm", "initial_gap", "refinement_order"]
    assert rep["metadata"]["config"]["n_steps"] == 256
    assert run(["lemma31-check", "--paths", "2000", "--seed", "1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["result"]["ks"] <= 0.03
