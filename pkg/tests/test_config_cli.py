import json
import subprocess
import sys
from pathlib import Path

import pytest

from torusns.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from torusns.config import DEFAULTS, ConfigError, apply_override, canonical_json, load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, data, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


# ---------------------------------------------------------------- config


def test_defaults_fill_in(tmp_path):
    cfg = load_config(write(tmp_path, {"experiment": "simulate", "grid": {"modes": 16}}))
    assert cfg["grid"] == {"dim": 3, "modes": 16}
    assert cfg["solver"] == DEFAULTS["solver"]


@pytest.mark.parametrize("data,key", [
    ({"experiment": "simulate", "solver": {"end_tme": 1.0}}, "solver.end_tme"),
    ({"experiment": "simulate", "bogus": 1}, "bogus"),
    ({"experiment": "simulate", "grid": {"modes": 15}}, "grid.modes"),
    ({"experiment": "simulate", "grid": {"dim": 4}}, "grid.dim"),
    ({"experiment": "simulate", "solver": {"dt": -0.1}}, "solver.dt"),
    ({"experiment": "simulate", "grid": {"modes": 8}}, "initial.max_wavenumber"),
    ({"experiment": "nope"}, "experiment"),
    ({"experiment": "simulate", "amplitudes": []}, "amplitudes"),
    ({"experiment": "simulate", "solver": {"nonlinear": 1}}, "solver.nonlinear"),
    ({"experiment": "g-system", "gsystem": {"kind": "tensor", "tensor": [[1]]}}, "gsystem.tensor"),
    ({"experiment": "verify-semigroup", "semigroup": {"t_min": 5, "t_max": 1}}, "semigroup.t_min"),
])
def test_validation_names_the_key(tmp_path, data, key):
    with pytest.raises(ConfigError) as exc:
        load_config(write(tmp_path, data))
    assert exc.value.key == key


def test_overrides():
    cfg = load_config(None, ["experiment=simulate", "solver.end_time=0.5", "grid.modes=16",
                             "solver.form=divergence", "seeds=[4, 5]"])
    assert cfg["solver"]["end_time"] == 0.5 and cfg["grid"]["modes"] == 16
    assert cfg["solver"]["form"] == "divergence" and cfg["seeds"] == [4, 5]
    with pytest.raises(ConfigError):
        apply_override(dict(DEFAULTS), "grid=3")
    with pytest.raises(ConfigError):
        apply_override(dict(DEFAULTS), "grid.modes")
    with pytest.raises(ConfigError):
        load_config(None, ["experiment=simulate", "solver.xx=1"])


def test_canonical_json_sorted():
    assert canonical_json({"b": 1, "a": {"d": 2, "c": 3}}) == '{"a":{"c":3,"d":2},"b":1}'


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_validate(name):
    cfg = load_config(CONFIGS / name)
    assert cfg["experiment"] is not None


def test_broken_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(p))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


# ---------------------------------------------------------------- CLI


def test_cli_unknown_key_exits_2(tmp_path, capsys):
    out = tmp_path / "out"
    cfg = write(tmp_path, {"experiment": "simulate", "solver": {"end_tme": 1.0}})
    assert main(["run", cfg, "--output-dir", str(out)]) == EXIT_CONFIG
    assert "solver.end_tme" in capsys.readouterr().err
    assert not out.exists()


def test_cli_describe_estimates(capsys):
    assert main(["describe", str(CONFIGS / "estimates.json")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "4 amplitudes x 3 seeds = 12 simulations" in text
    assert "memory:" in text


def test_cli_describe_window_warning(tmp_path, capsys):
    cfg = write(tmp_path, {"experiment": "simulate", "estimates": {"C": 0.6},
                           "initial": {"amplitude": 4.0}, "solver": {"end_time": 1.0}})
    assert main(["describe", cfg]) == EXIT_OK
    assert "WARNING: end time 1 exceeds the existence window" in capsys.readouterr().out


def test_cli_kernel_run_is_reproducible(tmp_path):
    args = ["--set", "kernel.x_points=3", "--set", "kernel.t_points=3", "--deterministic"]
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = str(CONFIGS / "verify-kernel.json")
    assert main(["run", cfg, "--output-dir", str(a)] + args) == EXIT_OK
    assert main(["run", cfg, "--output-dir", str(b)] + args) == EXIT_OK
    ra, rb = json.loads((a / "report.json").read_text()), json.loads((b / "report.json").read_text())
    assert ra["passed"] and ra["schema_version"] == 1
    assert ra["config_hash"] == rb["config_hash"]
    ra["config"].pop("output_dir"), rb["config"].pop("output_dir")
    assert ra == rb


def test_cli_simulate_rerun_byte_identical(tmp_path):
    data = {"experiment": "simulate", "grid": {"dim": 2, "modes": 16},
            "initial": {"max_wavenumber": 3}, "solver": {"end_time": 0.02, "dt": 0.005}}
    cfg = write(tmp_path, data)
    for _ in range(2):
        assert main(["run", cfg, "--output-dir", str(tmp_path / "o"), "--deterministic"]) == EXIT_OK
        (tmp_path / "o" / "report.json").rename(tmp_path / f"r{_}.json")
    assert (tmp_path / "r0.json").read_bytes() == (tmp_path / "r1.json").read_bytes()
    assert (tmp_path / "o" / "trajectory.csv").exists()
    assert sorted(p.name for p in (tmp_path / "o").glob("*.pfld")) == ["u_00000.pfld", "u_00004.pfld"]


def test_cli_blowup_exits_1(tmp_path):
    cfg = write(tmp_path, {"experiment": "simulate", "grid": {"dim": 2, "modes": 16},
                           "initial": {"max_wavenumber": 3},
                           "solver": {"end_time": 0.02, "dt": 0.005, "blowup_threshold": 0.5}})
    out = tmp_path / "o"
    assert main(["run", cfg, "--output-dir", str(out)]) == EXIT_NUMERICAL
    diag = json.loads((out / "diagnostics.json").read_text())
    assert "blow-up" in diag["message"]


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "torusns.cli", "describe", str(CONFIGS / "verify-kernel.json")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "plan: 20 x 20" in r.stdout
