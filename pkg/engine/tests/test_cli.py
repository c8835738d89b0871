"""
Path: engine/tests/test_cli.py
Purpose: End-to-end tests of the command-line front end
Logic:
  - Strict config parsing: defaults, unknown keys, digest round trip
  - Exit codes 0 / 1 / 2 and the files each kind writes
  - Bit-identical reruns for a seeded simulation
"""

import csv
import json
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest

from app.config import Settings, resolve_threads
from app.errors import ConfigError
from app.main import main
from app.services.config_loader import config_digest, dump_config, parse_config

CONFIGS = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'configs'))
MECH0_FILE = os.path.join(CONFIGS, 'mechanisms', 'mech0.json')
MECH0_IMM_FILE = os.path.join(CONFIGS, 'mechanisms', 'mech0_imm.json')


def _write(path, payload) -> str:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)
    return str(path)


def _rows(path):
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def _meta(out_dir):
    with open(os.path.join(out_dir, "meta.json"), encoding="utf-8") as handle:
        return json.load(handle)


def test_parse_config_defaults(tmp_path):
    """Test that a minimal config gets dt, replicas and seed defaults"""
    path = _write(tmp_path / "c.json", {"mechanism": MECH0_FILE, "kind": "simulate", "x": [1, 1], "t": 1})
    config = parse_config(path)
    assert (config.dt, config.replicas, config.seed) == (1e-3, 10_000, 42)
    assert config.x == (1.0, 1)

    print("✓ Config defaults test passed")


def test_parse_config_rejects_unknown_key(tmp_path):
    """Test rejection naming the unknown key"""
    path = _write(tmp_path / "c.json", {"mechanism": MECH0_FILE, "kind": "validate", "alpha2": 0.3})
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert "alpha2" in str(info.value)

    print("✓ Unknown key test passed")


def test_parse_config_missing_parameters(tmp_path):
    """Test that kind-specific parameters are required"""
    path = _write(tmp_path / "c.json", {"mechanism": MECH0_FILE, "kind": "wasserstein", "x": [2, 3]})
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert "y" in str(info.value) and "t" in str(info.value)

    print("✓ Missing parameter test passed")


def test_config_digest_round_trip(tmp_path):
    """Test parse -> serialize -> parse keeps the digest, and a seed change alters it"""
    config = parse_config(os.path.join(CONFIGS, "experiments", "tau_dist.json"))
    again = parse_config(_write(tmp_path / "again.json", dump_config(config)))
    assert config_digest(config) == config_digest(again)
    reseeded = parse_config(_write(tmp_path / "seed.json", {**dump_config(config), "seed": 7}))
    assert config_digest(reseeded) != config_digest(config)

    print("✓ Digest round-trip test passed")


def test_resolve_threads_precedence():
    """Test --threads over MSB_THREADS over auto"""
    assert resolve_threads(3, Settings(threads=5)) == 3
    assert resolve_threads(None, Settings(threads=5)) == 5
    assert resolve_threads(None, Settings(threads=0)) >= 1
    with pytest.raises(ConfigError):
        resolve_threads(-1, Settings())

    print("✓ Thread precedence test passed")


def test_validate_reference_mechanism(tmp_path):
    """Test validate on the reference file: exit 0 with no violations"""
    out = str(tmp_path / "out")
    code = main(["--config", os.path.join(CONFIGS, "experiments", "validate.json"), "--out", out, "--threads", "1"])
    assert code == 0
    meta = _meta(out)
    assert meta["violations"] == []
    assert meta["kind"] == "validate" and meta["seed"] == 42
    assert {"config_digest", "mechanism_digest", "inputs_digest", "versions", "wall_time"} <= set(meta)

    print("✓ Validate exit-0 test passed")


def test_validate_bad_mechanism(tmp_path):
    """Test validate on an inadmissible mechanism: exit 1 listing violations"""
    mech = _write(tmp_path / "bad.json", {"branching": {"a11": 0.5, "a21": -1.0, "n2": [[0.5, -2, 1.0]]}})
    config = _write(tmp_path / "c.json", {"mechanism": mech, "kind": "validate"})
    out = str(tmp_path / "out")
    assert main(["--config", config, "--out", out]) == 1
    assert len(_meta(out)["violations"]) == 2

    solve = _write(tmp_path / "s.json", {"mechanism": mech, "kind": "solve-v", "lambda": [1, 1], "t": 1})
    assert main(["--config", solve, "--out", str(tmp_path / "out2")]) == 1

    print("✓ Validate exit-1 test passed")


def test_solve_v_zero_lambda(tmp_path):
    """Test solve-v --lambda 0,0 writes zeros at every t"""
    out = str(tmp_path / "out")
    code = main(["solve-v", "--config", os.path.join(CONFIGS, "experiments", "solve_v.json"),
                 "--lambda", "0,0", "--t", "1", "--out", out])
    assert code == 0
    rows = _rows(os.path.join(out, "result.csv"))
    assert list(rows[0]) == ["t", "v1", "v2"]
    assert len(rows) == 1001
    assert all(float(r["v1"]) == 0.0 and float(r["v2"]) == 0.0 for r in rows)

    print("✓ solve-v zero lambda test passed")


def test_missing_files_exit_1(tmp_path):
    """Test that missing config and mechanism files exit 1"""
    assert main(["--config", str(tmp_path / "nope.json")]) == 1
    config = _write(tmp_path / "c.json", {"mechanism": str(tmp_path / "gone.json"), "kind": "validate"})
    assert main(["--config", config, "--out", str(tmp_path / "out")]) == 1

    print("✓ Missing file test passed")


def test_numeric_failure_exit_2(tmp_path):
    """Test that a refused tau-leap step exits 2"""
    mech = _write(tmp_path / "busy.json", {"branching": {"a11": 0.0, "n1": [[0.1, 0, 1000.0]]}})
    config = _write(tmp_path / "c.json", {"mechanism": mech, "kind": "simulate", "x": [1, 0], "t": 1,
                                          "dt": 0.1, "replicas": 4})
    assert main(["--config", config, "--out", str(tmp_path / "out")]) == 2

    print("✓ Numeric failure test passed")


def test_simulate_rerun_is_bit_identical(tmp_path):
    """Test that identical config and seed reproduce result.csv byte for byte"""
    config = _write(tmp_path / "c.json", {"mechanism": MECH0_IMM_FILE, "kind": "simulate", "x": [1, 1],
                                          "t": 0.2, "dt": 0.01, "replicas": 64})
    outputs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["--config", config, "--out", out, "--seed", "123", "--threads", "1"]) == 0
        with open(os.path.join(out, "result.csv"), "rb") as handle:
            outputs.append(handle.read())
        assert os.path.exists(os.path.join(out, "sample.json"))
    assert outputs[0] == outputs[1]
    assert _meta(str(tmp_path / "a"))["seed"] == 123

    out = str(tmp_path / "c")
    assert main(["--config", config, "--out", out, "--seed", "124", "--threads", "1"]) == 0
    with open(os.path.join(out, "result.csv"), "rb") as handle:
        assert handle.read() != outputs[0]

    print("✓ Bit-identical rerun test passed")


def test_moments_and_oracle_row(tmp_path):
    """Test the moments and oracle-row tables"""
    out = str(tmp_path / "m")
    assert main(["--config", os.path.join(CONFIGS, "experiments", "moments.json"), "--out", out]) == 0
    rows = _rows(os.path.join(out, "result.csv"))
    assert list(rows[0]) == ["t", "pi1", "pi2", "mean1", "mean2"]
    last = rows[-1]
    assert float(last["pi1"]) == pytest.approx(float(last["pi2"]), abs=1e-8)
    assert float(last["mean1"]) + float(last["mean2"]) == pytest.approx(2 * 2.718281828459045 ** -0.5, abs=1e-9)

    out = str(tmp_path / "o")
    assert main(["--config", os.path.join(CONFIGS, "experiments", "oracle_row.json"), "--out", out]) == 0
    rows = _rows(os.path.join(out, "result.csv"))
    assert list(rows[0]) == ["state", "prob"] and len(rows) == 400
    assert sum(float(r["prob"]) for r in rows) <= 1.0 + 1e-12
    assert "leak_bound" in _meta(out)

    print("✓ Moments / oracle-row test passed")


def test_wasserstein_report(tmp_path):
    """Test the wasserstein kind writes the JSON report"""
    out = str(tmp_path / "w")
    code = main(["--config", os.path.join(CONFIGS, "experiments", "wasserstein.json"), "--out", out,
                 "--replicas", "128", "--threads", "1"])
    assert code == 0
    with open(os.path.join(out, "result.json"), encoding="utf-8") as handle:
        report = json.load(handle)
    assert {"lower", "upper", "empirical_w1", "bootstrap_se", "rate", "vartheta"} <= set(report)
    assert report["lower"] == pytest.approx(2.714512, abs=1e-6)
    assert report["upper"] == pytest.approx(2.714512, abs=1e-6)

    print("✓ Wasserstein report test passed")

def test_simulate_writes_path(tmp_path):
    """Test that simulate --path adds the t,y1,y2,event table of stream 0"""
    config = _write(tmp_path / "c.json", {"mechanism": MECH0_IMM_FILE, "kind": "simulate", "x": [1, 1],
                                          "t": 0.5, "dt": 0.01, "replicas": 8})
    out = str(tmp_path / "out")
    assert main(["--config", config, "--out", out, "--path", "--threads", "1"]) == 0
    rows = _rows(os.path.join(out, "path.csv"))
    assert list(rows[0]) == ["t", "y1", "y2", "event"]
    assert sum(r["event"] == "step" for r in rows) == 51
    assert float(rows[-1]["t"]) == pytest.approx(0.5)
    assert _meta(out)["path_jumps"] == len(rows) - 51

    out = str(tmp_path / "plain")
    assert main(["--config", config, "--out", out, "--threads", "1"]) == 0
    assert not os.path.exists(os.path.join(out, "path.csv"))

    print("✓ Path output test passed")


def test_stationary_convergence_table(tmp_path):
    """Test that stationary with x and t_grid writes the convergence table"""
    config = _write(tmp_path / "c.json", {"mechanism": MECH0_IMM_FILE, "kind": "stationary",
                                          "lambdas": [[1.0, 1.0]], "x": [1, 1], "t_grid": [0.0, 1.0],
                                          "replicas": 64, "dt": 0.01, "burn_in": 5.0})
    out = str(tmp_path / "out")
    assert main(["--config", config, "--out", out, "--threads", "1"]) == 0
    rows = _rows(os.path.join(out, "convergence.csv"))
    assert list(rows[0]) == ["t", "empirical_w1", "bootstrap_se", "bound"]
    assert [float(r["t"]) for r in rows] == [0.0, 1.0]
    meta = _meta(out)
    assert float(rows[0]["empirical_w1"]) == pytest.approx(meta["initial_distance"], rel=1e-9)
    assert "noise_floor" in meta

    print("✓ Stationary convergence table test passed")



if __name__ == "__main__":
    import tempfile
    from pathlib import Path
    for test in (test_parse_config_defaults, test_parse_config_rejects_unknown_key,
                 test_parse_config_missing_parameters, test_config_digest_round_trip,
                 test_validate_reference_mechanism, test_validate_bad_mechanism, test_solve_v_zero_lambda,
                 test_missing_files_exit_1, test_numeric_failure_exit_2, test_simulate_rerun_is_bit_identical,
                 test_moments_and_oracle_row, test_wasserstein_report, test_simulate_writes_path,
                 test_stationary_convergence_table):
        with tempfile.TemporaryDirectory() as tmp:
            test(Path(tmp))
    test_resolve_threads_precedence()
    print("\n✅ All CLI tests passed!")
