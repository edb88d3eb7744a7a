"""End-to-end tests of the command-line interface.

Subcommands run in subprocesses via ``python -m slowmanifold`` so argument
parsing, exit codes, and file outputs are exercised exactly as a user sees
them.  Pure configuration logic is tested in-process.
"""

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from slowmanifold import DetectionConfig, LPOracleConfig, SystemParams
from slowmanifold.cli import ConfigError, load_config

QUICK_SWEEP = {
    "params": {"eps": 0.01, "sigma": 0.1, "a": 0.6},
    "detection": {
        "initial_x": [-0.5, 0.5],
        "dt": 0.01,
        "horizon": 400.0,
        "settle_window": 50.0,
        "settle_tol": 0.1,
        "thin": 10,
    },
    "a_values": [0.6],
    "seed": 1,
}


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "slowmanifold", *args],
        capture_output=True, text=True, cwd=cwd,
    )


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def read_csv(path):
    # trajectory files carry two leading comment lines before the header
    return np.genfromtxt(path, delimiter=",", names=True, skip_header=2)


def test_version_flag():
    result = run_cli("--version")
    assert result.returncode == 0
    assert "slowmanifold" in result.stdout


def test_help_lists_subcommands():
    result = run_cli("--help")
    assert result.returncode == 0
    for name in ("simulate", "sweep", "manifold", "oracle", "verify-lift"):
        assert name in result.stdout


def test_load_config_defaults_and_overrides(tmp_path):
    path = write_config(tmp_path, {
        "params": {"eps": 0.02, "sigma": 0.2, "a": 0.1},
        "detection": {"dt": 0.02, "settle_window": 100.0},
        "oracle": {"quadrature_dt": 0.01},
        "seed": 7,
        "a_values": [0.1, 0.2],
    })
    cfg = load_config(path, overrides={"seed": 9, "out": None})
    assert cfg.params == SystemParams(eps=0.02, sigma=0.2, a=0.1)
    assert cfg.detection.dt == 0.02
    assert cfg.oracle.quadrature_dt == 0.01
    assert cfg.seed == 9  # flag wins over file
    assert cfg.out == "out"  # None override is ignored
    assert cfg.a_values == (0.1, 0.2)
    assert isinstance(cfg.detection, DetectionConfig)
    assert isinstance(cfg.oracle, LPOracleConfig)


def test_load_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(write_config(tmp_path, {"horizn": 4.0}))
    with pytest.raises(ConfigError, match="params"):
        load_config(write_config(tmp_path, {"params": {"epsilon": 0.01}}))
    with pytest.raises(ConfigError, match="detection"):
        load_config(write_config(tmp_path, {"detection": {"dtt": 0.01}}))


def test_load_config_rejects_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {"params": {"eps": -1.0}}))
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {"thin": 0}))
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {"params": []}))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_cli_rejects_unknown_key_with_exit_2(tmp_path):
    path = write_config(tmp_path, {"horizn": 4.0})
    result = run_cli("simulate", "--config", path, "--out", str(tmp_path / "out"))
    assert result.returncode == 2
    assert "unknown keys" in result.stderr


def test_simulate_writes_trajectories(tmp_path):
    config = write_config(tmp_path, {
        "params": {"eps": 0.01, "sigma": 0.1, "a": 0.6},
        "detection": {"initial_x": [1.0], "dt": 0.01},
        "horizon": 2.0,
        "thin": 5,
        "seed": 9,
    })
    out = tmp_path / "out"
    result = run_cli("simulate", "--config", config, "--out", str(out), "--dump-path")
    assert result.returncode == 0, result.stderr

    full = read_csv(out / "full_0.csv")
    assert full.dtype.names == ("t", "x", "y", "z", "J", "I")
    assert full.shape == (41,)  # 201 samples thinned by 5
    assert full["t"][0] == 0.0
    assert full["t"][-1] == pytest.approx(2.0)
    assert np.array_equal(full["z"], 0.1 * full["J"])

    reduced = read_csv(out / "reduced_0.csv")
    assert reduced.dtype.names == ("t", "x", "z", "I")
    assert reduced.shape == (41,)
    # shared noise: both runs see the same driving samples
    assert np.array_equal(full["z"], reduced["z"])

    path_file = read_csv(out / "path_0.csv")
    assert path_file.dtype.names == ("t", "dW")
    assert path_file.shape == (200,)

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["package"] == "slowmanifold"
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 9
    assert manifest["outputs"] == sorted(["full_0.csv", "reduced_0.csv", "path_0.csv"])
    assert "out" not in manifest["config"]
    assert "threads" not in manifest["config"]


def test_simulate_reruns_are_byte_identical(tmp_path):
    config = write_config(tmp_path, {
        "params": {"eps": 0.01, "sigma": 0.1, "a": 0.6},
        "detection": {"initial_x": [-0.5, 1.0], "dt": 0.01},
        "horizon": 2.0,
        "seed": 5,
    })
    outs = []
    for name, extra in (("one", []), ("two", []), ("thr", ["--threads", "3"])):
        out = tmp_path / name
        result = run_cli("simulate", "--config", config, "--out", str(out), *extra)
        assert result.returncode == 0, result.stderr
        outs.append(out)
    names = ["full_0.csv", "full_1.csv", "reduced_0.csv", "reduced_1.csv",
             "manifest.json"]
    for name in names:
        reference = (outs[0] / name).read_bytes()
        assert (outs[1] / name).read_bytes() == reference
        assert (outs[2] / name).read_bytes() == reference


def test_simulate_seed_changes_output(tmp_path):
    config = write_config(tmp_path, {
        "detection": {"initial_x": [1.0], "dt": 0.01},
        "horizon": 1.0,
    })
    a_out, b_out = tmp_path / "a", tmp_path / "b"
    assert run_cli("simulate", "--config", config, "--out", str(a_out),
                   "--seed", "1").returncode == 0
    assert run_cli("simulate", "--config", config, "--out", str(b_out),
                   "--seed", "2").returncode == 0
    assert (a_out / "full_0.csv").read_bytes() != (b_out / "full_0.csv").read_bytes()


def test_sweep_outputs_reports(tmp_path):
    config = write_config(tmp_path, QUICK_SWEEP)
    out = tmp_path / "out"
    result = run_cli("sweep", "--config", config, "--out", str(out))
    assert result.returncode == 0, result.stderr

    doc = json.loads((out / "bifurcation.json").read_text())
    assert len(doc["entries"]) == 1
    entry = doc["entries"][0]
    assert entry["a"] == 0.6
    assert entry["full"]["count"] == 1
    assert entry["reduced"]["count"] == 1
    assert entry["full_error"] is None

    lines = (out / "bifurcation.csv").read_text().splitlines()
    assert lines[0] == "a,system,count,pos_1,divergent,unsettled"
    assert len(lines) == 3
    assert lines[1].startswith("0.6,full,1,")
    assert lines[2].startswith("0.6,reduced,1,")


def test_sweep_requires_a_values(tmp_path):
    config = write_config(tmp_path, {"seed": 1})
    result = run_cli("sweep", "--config", config, "--out", str(tmp_path / "out"))
    assert result.returncode == 2
    assert "a_values" in result.stderr


def test_manifold_table(tmp_path):
    config = write_config(tmp_path, {
        "params": {"eps": 0.01, "sigma": 0.1, "a": 0.6},
        "oracle": {"quadrature_dt": 0.01},
        "xi_min": -1.0,
        "xi_max": 1.0,
        "xi_step": 0.5,
        "seed": 1,
    })
    out = tmp_path / "out"
    result = run_cli("manifold", "--config", config, "--out", str(out))
    assert result.returncode == 0, result.stderr
    table = read_csv(out / "manifold.csv")
    assert table.dtype.names == ("xi", "h0", "h1", "oracle")
    assert table.shape == (5,)
    np.testing.assert_allclose(table["xi"], [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert np.all(np.abs(table["h1"] - table["oracle"]) < 1e-4)
    assert "max |h1 - oracle|" in result.stdout
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["oracle_failures"] == 0


def test_oracle_diagnostics_json(tmp_path):
    config = write_config(tmp_path, {"seed": 1})
    result = run_cli("oracle", "--config", config, "--xi", "1.0",
                     cwd=str(tmp_path))
    assert result.returncode == 0, result.stderr
    doc = json.loads(result.stdout)
    assert doc["xi"] == 1.0
    assert doc["sweeps"] >= 2
    assert len(doc["deltas"]) == doc["sweeps"]
    assert doc["abs_diff_h1"] < 1e-4


def test_oracle_failure_exits_3(tmp_path):
    config = write_config(tmp_path, {
        "params": {"eps": 0.1, "sigma": 0.1, "a": 0.6},
        "oracle": {"max_sweeps": 1},
    })
    result = run_cli("oracle", "--config", config, "--xi", "1.5",
                     cwd=str(tmp_path))
    assert result.returncode == 3
    assert "numerical failure" in result.stderr


def test_verify_lift_cli(tmp_path):
    out = tmp_path / "out"
    result = run_cli("verify-lift", "--a", "0.6", "--seed", "3",
                     "--out", str(out))
    assert result.returncode == 0, result.stderr
    assert "PASS" in result.stdout
    doc = json.loads((out / "lift.json").read_text())
    assert doc["passed"] is True
    assert doc["a"] == 0.6
    assert len(doc["times_to_threshold"]) == 2


def test_console_script_is_installed():
    exe = shutil.which("slowmanifold")
    if exe is None:
        pytest.skip("console script not on PATH in this environment")
    result = subprocess.run([exe, "--version"], capture_output=True, text=True)
    assert result.returncode == 0
    assert "slowmanifold" in result.stdout
