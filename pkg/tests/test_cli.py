import os
import subprocess
import sys

import pytest

from misspec.cli import ConfigError, load_config, main


def _body(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# misspec ")
    return lines[1:]


def test_curve_command(tmp_path):
    assert main(["curve", "--out", str(tmp_path)]) == 0
    rows = _body(tmp_path / "curve_left.csv")
    assert rows[0] == "alpha,rho" and len(rows) == 100
    assert _body(tmp_path / "failures.csv") == ["contract,passed,detail"]


def test_project_command(tmp_path):
    assert main(["project", "--out", str(tmp_path)]) == 0
    assert "boundary,1," in "\n".join(_body(tmp_path / "theta_star.csv"))


def test_scenario_file_and_overrides(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text("[model]\nmodel = parametric_boundary\n[run]\nreps = 8\nn_list = 100,200\n")
    cfg = load_config("rate", str(ini), str(tmp_path), 5, ["reps=9"])
    assert cfg["model"] == "parametric_boundary"
    assert cfg["reps"] == 9
    assert cfg["n_list"] == (100, 200)
    assert cfg.seed == 5


def test_unknown_key_lists_valid_keys(tmp_path):
    ini = tmp_path / "s.ini"
    ini.write_text("[model]\nmodle = mixture\n")
    with pytest.raises(ConfigError, match="valid keys: .*model"):
        load_config("rate", str(ini), str(tmp_path), 0)
    assert main(["rate", "--set", "bogus=1", "--out", str(tmp_path)]) == 2


def test_bad_value_rejected(tmp_path):
    with pytest.raises(ConfigError, match="reps"):
        load_config("rate", None, str(tmp_path), 0, ["reps=many"])


def test_failed_contract_sets_exit_status(tmp_path):
    args = ["rate", "--out", str(tmp_path), "--set", "n_list=100,200,400,800", "--set", "reps=8",
            "--set", "grid_points=20001", "--set", "beta_min=0.5", "--set", "beta_max=0.9"]
    assert main(args) == 1
    fails = _body(tmp_path / "failures.csv")
    assert fails[1].startswith("rate_exponent,false,")


def test_module_entry_point(tmp_path):
    env = dict(os.environ, MISSPEC_THREADS="1")
    r = subprocess.run([sys.executable, "-m", "misspec", "curve", "--set", "setting=right", "--out", str(tmp_path)],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0, r.stderr
    assert "PASS curve_right_oracle" in r.stdout
