import json

import pytest

from projflat import cli
from projflat.curvature import closed_form_extrema
from projflat.verify import CheckResult


def run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_length_compare(capsys):
    code, out, _ = run(capsys, "length", "compare", "--k1", "2", "--k2", "0", "--k3", "-3", "--epsilon", "2",
                       "--mu", "1", "--delta", "0.05", "--gauge", "canonical", "--no-geodesic")
    doc = json.loads(out)
    assert code == 0 and doc["schema"] == 1
    assert abs(doc["L1"] - doc["L2"]) < 1e-8


def test_curvature_extrema_variant(capsys):
    code, out, _ = run(capsys, "curvature", "extrema", "--variant", "square-plus", "--mu", "1", "--delta", "0.1")
    doc = json.loads(out)
    cf = closed_form_extrema("square-plus", 1.0, 0.1)
    assert code == 0
    assert doc["min"] == pytest.approx(cf.min, rel=1e-9) and doc["max"] == pytest.approx(cf.max, rel=1e-9)


def test_curvature_grid_csv(capsys):
    code, out, _ = run(capsys, "curvature", "grid", "--variant", "zero-plus", "--mu", "1", "--delta", "0.1",
                       "--n", "5", "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "s,t,R" and len(lines) == 26
    assert all(len(v.split(",")) == 3 for v in lines[1:])


def test_output_is_byte_identical(capsys, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"o{i}.csv"
        code, _, _ = run(capsys, "phi", "solve", "--k1", "0.5", "--k2", "2", "--k3", "-1", "--n", "11",
                         "--format", "csv", "--output", str(path))
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].splitlines()[0] == b"s,phi,dphi,ddphi"


def test_gauge_tag_required(capsys):
    code, _, err = run(capsys, "length", "compare", "--k1", "2", "--k2", "0", "--k3", "-3",
                       "--mu", "1", "--delta", "0.05")
    assert code == 2 and err.startswith("ERROR ") and "gauge" in err


def test_validation_and_numeric_exit_codes(capsys):
    code, _, err = run(capsys, "phi", "regularity", "--k1", "1", "--k2", "2", "--k3", "2")
    assert code == 2 and "type=RandersType" in err
    code, _, _ = run(capsys, "curvature", "extrema", "--variant", "zero-minus", "--mu", "1", "--delta", "0.3")
    assert code == 2
    code, _, _ = run(capsys, "gauge", "ivp", "--k1", "0.5", "--k2", "2", "--k3", "-1", "--v0", "5", "--t-max", "1")
    assert code == 3
    code, _, _ = run(capsys, "phi", "bogus")
    assert code == 2


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "job.json"
    cfg.write_text(json.dumps({"command": "phi regularity", "params": {"k1": -2, "k2": 0, "k3": 3}}))
    code, out, _ = run(capsys, "--config", str(cfg))
    assert code == 0 and json.loads(out)["b_hat"] == pytest.approx(2 ** -0.5, rel=1e-12)
    cfg.write_text(json.dumps({"k1": 1, "k2": 1, "k3": 0, "typo": 3}))
    code, _, err = run(capsys, "phi", "taylor", "--config", str(cfg))
    assert code == 2 and "typo" in err


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "job.json"
    cfg.write_text(json.dumps({"k1": 1, "k2": 1, "k3": 0}))
    code, out, _ = run(capsys, "phi", "taylor", "--config", str(cfg), "--k1", "2", "--k2", "1")
    assert code == 0 and json.loads(out)["coefficients"][2] == pytest.approx(1.0)


def test_gauge_and_geodesic_commands(capsys):
    code, out, _ = run(capsys, "gauge", "square", "--sign", "-1", "--n", "3", "--format", "csv")
    assert code == 0 and out.splitlines()[0] == "B,u,v,w"
    code, out, _ = run(capsys, "geodesic", "--variant", "square-plus", "--mu", "1", "--delta", "0.1",
                       "--closed", "--format", "csv")
    rows = out.splitlines()
    assert code == 0 and rows[0].startswith("t,X0,X1,X2")
    code, out, _ = run(capsys, "curvature", "table", "--mu", "1", "--delta", "0.1")
    assert code == 0 and len(json.loads(out)["variants"]) == 3


def test_verify_table_and_exit_code(capsys, monkeypatch):
    import projflat.verify as verify
    fake = [(1, CheckResult("a", True, 0.0, 1.0, "")), (2, CheckResult("b", False, 2.0, 1.0, "x"))]
    monkeypatch.setattr(verify, "run_all", lambda: fake)
    code, out, err = run(capsys, "verify")
    assert code == 3 and "FAIL" in out and "PASS" in out and "failed=1" in err
    monkeypatch.setattr(verify, "run_all", lambda: fake[:1])
    code, _, _ = run(capsys, "verify")
    assert code == 0
