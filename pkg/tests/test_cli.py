"""Command-line interface: JSON reports, determinism, exit codes."""

import json
import math

import pytest

from spinql.cli import (main, run_compute, run_verify, run_convergence,
                        dump_json, build_spec, load_config)
from spinql import ValidationError


CONF_CONFIG = {
    "spec": {"variant": "ConformalFlat",
             "phi": {"type": "poly_1mr2", "coeffs": [0.5]}},
    "resolution": [24, 48],
}


def test_compute_report_fields():
    out = run_compute(CONF_CONFIG)
    for key in ("energy", "neg_inf", "method", "method_values", "kernel_dim",
                "brown_york", "closed_form", "cross_check_deltas",
                "residuals", "resolution", "path", "notes",
                "runtime_seconds", "config_echo"):
        assert key in out
    assert out["kernel_dim"] == 1
    assert abs(out["closed_form"] - math.pi) <= 1e-8
    assert not out["neg_inf"]
    assert out["resolution"] == [24, 48]


def test_compute_byte_stable_modulo_runtime():
    out1 = run_compute(CONF_CONFIG)
    out2 = run_compute(CONF_CONFIG)
    out1.pop("runtime_seconds")
    out2.pop("runtime_seconds")
    assert dump_json(out1) == dump_json(out2)


def test_config_echo_round_trip():
    out = run_compute(CONF_CONFIG)
    out2 = run_compute(out["config_echo"])
    assert abs(out["energy"] - out2["energy"]) <= 1e-12


def test_neg_inf_serialization():
    config = {"spec": {"variant": "ConformalFlat",
                       "phi": {"type": "poly_1mr2", "coeffs": [-0.5]}},
              "resolution": [24, 48]}
    out = run_compute(config)
    assert out["neg_inf"] is True
    assert out["energy"] is None


def test_json_float_formatting():
    text = dump_json({"x": 1.0 / 3.0, "flag": True, "none": None})
    parsed = json.loads(text)
    assert parsed["x"] == 1.0 / 3.0
    assert parsed["flag"] is True
    assert parsed["none"] is None


def test_compute_command_writes_report(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"spec": {"variant": "FlatDisk"},
                               "resolution": [16, 32]}))
    out_path = tmp_path / "report.json"
    code = main(["compute", "--config", str(cfg), "--out", str(out_path)])
    assert code == 0
    report = json.loads(out_path.read_text())
    assert abs(report["energy"]) <= 5e-3
    stdout = json.loads(capsys.readouterr().out)
    assert stdout["out"] == str(out_path)


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["compute", "--config", str(cfg),
                 "--out", str(tmp_path / "x.json")]) == 2
    cfg.write_text(json.dumps({"spec": {"variant": "NoSuchVariant"}}))
    assert main(["compute", "--config", str(cfg),
                 "--out", str(tmp_path / "x.json")]) == 2
    capsys.readouterr()


def test_unknown_suite_exit_code(capsys):
    assert main(["verify", "--suite", "bogus"]) == 2
    capsys.readouterr()


def test_verify_clifford_suite():
    summary = run_verify("clifford", seed=0)
    assert summary["pass"]
    assert all(c["pass"] for c in summary["checks"])


def test_convergence_flat_disk():
    table = run_convergence({"spec": {"variant": "FlatDisk"},
                             "resolution": (16, 32)}, levels=2)
    assert table["oracle"] == 0.0
    for row in table["levels"]:
        assert row["error"] <= 5e-3


def test_convergence_rejects_neg_inf():
    with pytest.raises(ValidationError):
        run_convergence({"spec": {"variant": "ConformalFlat",
                                  "phi": {"type": "poly_1mr2",
                                          "coeffs": [-0.5]}}}, levels=2)


def test_build_spec_and_load_config(tmp_path):
    spec = build_spec({"variant": "RotSym", "n": 3,
                       "profile": {"type": "sin"},
                       "rho_max": math.pi / 3})
    spec.validate()
    with pytest.raises(ValidationError):
        build_spec({"variant": "FlatDisk", "radius": "x"} | {"variant": "?"})
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"resolution": [8, 16]}))
    with pytest.raises(ValidationError):
        load_config(str(cfg))
