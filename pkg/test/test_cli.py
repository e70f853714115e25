# test/test_cli.py
import json

import pytest

from conftest import remote_bus_data, three_bus_data
from roa_invariance import codec
from roa_invariance.cct import CctStatus
from roa_invariance.cli import RunConfig, build_parser, build_run_config, emit, main
from roa_invariance.errors import ConfigError, RoaError


@pytest.fixture
def remote_case_file(tmp_path):
    path = tmp_path / "remote_bus.json"
    path.write_text(json.dumps(remote_bus_data()))
    return str(path)


def test_roa_grid_csv(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["roa", "--example", "example1", "--grid-box=-1,1,-1,1", "--resolution", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "x1,x2,f1,f2"
    assert len(lines) == 10
    sets = json.loads((tmp_path / "example1.sets.json").read_text())
    assert sets["example"] == "example1"
    assert len(sets["omega_e"]["A"]) == 4


def test_roa_sets_land_next_to_the_grid(tmp_path):
    out = tmp_path / "grid.csv"
    assert main(["roa", "--example", "example1", "--resolution", "3", "--output", str(out)]) == 0
    assert out.read_text().startswith("x1,x2,f1,f2")
    sets = json.loads((tmp_path / "grid.sets.json").read_text())
    assert len(sets["omega_e"]["A"]) == 4
    assert "grid" not in sets


def test_roa_json_and_sets_file(tmp_path, capsys):
    sets = tmp_path / "sets.json"
    assert main(["roa", "--example", "example3", "--format", "json", "--resolution", "2",
                 "--sets", str(sets)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["example"] == "example3"
    assert len(doc["grid"]["states"]) == 4
    written = json.loads(sets.read_text())
    assert written["params"] == {"a": 2.0, "b": 2.7, "c": 1.7}
    assert "grid" not in written


def test_roa_for_a_contingency(remote_case_file, capsys):
    assert main(["roa", "--case", remote_case_file, "--contingency", "bus:4,line:3-4"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["omega_e"]["dim"] == 1
    assert len(doc["omega_e"]["A"]) == 2


def test_cct_table(remote_case_file, tmp_path):
    out = tmp_path / "cct.csv"
    code = main(["cct", "--case", remote_case_file, "--contingency", "bus:4,line:3-4",
                 "--dt", "0.01", "--tmax", "1.0", "--tol", "0.01", "--jobs", "1", "--output", str(out)])
    assert code == 0
    (row,) = codec.parse_cct_csv(out.read_text())
    assert row["faulted_bus"] == 4
    assert row["tripped_line"] == "3-4"
    assert row["status"] is CctStatus.NEVER_EXITS
    assert row["t_c_oracle"] == pytest.approx(1.0)


def test_cct_json_round_trips(remote_case_file, capsys):
    code = main(["cct", "--case", remote_case_file, "--contingency", "bus:4,line:3-4", "--contingency",
                 "bus:3,line:3-9", "--dt", "0.01", "--tmax", "0.5", "--tol", "0.01", "--jobs", "1",
                 "--format", "json"])
    assert code == 0
    results = codec.parse_cct_json(json.loads(capsys.readouterr().out))
    assert [str(r.contingency) for r in results] == ["bus:4,line:3-4", "bus:3,line:3-9"]
    assert results[1].status is CctStatus.FAILED


def test_cct_needs_contingencies(remote_case_file, capsys):
    assert main(["cct", "--case", remote_case_file]) == 2
    assert "contingency" in capsys.readouterr().err


def test_simulate_example(capsys):
    assert main(["simulate", "--example", "example2", "--x0", "1.0,-0.5", "--t-end", "0.1", "--dt", "0.01"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,x1,x2"
    assert lines[1] == "0.0,1.0,-0.5"
    assert len(lines) == 12


def test_simulate_clearing(remote_case_file, capsys):
    assert main(["simulate", "--case", remote_case_file, "--contingency", "bus:4,line:3-4",
                 "--clear", "0.05", "--dt", "0.01", "--tmax", "0.2"]) == 0
    traj = codec.parse_trajectory_csv(capsys.readouterr().out)
    assert traj.dim == 4
    assert traj.final_time == pytest.approx(0.2)


def test_library_errors_exit_with_one(tmp_path, capsys):
    path = tmp_path / "three_bus.json"
    path.write_text(json.dumps(three_bus_data()))
    assert main(["simulate", "--case", str(path), "--contingency", "bus:3,line:3-9"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "3-9" in err


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["roa", "--example", "example7"],
    ["cct", "--case", "wscc9", "--contingency", "bus:8"],
    ["cct", "--case", "no_such_case", "--contingency", "bus:8,line:8-9"],
    ["simulate", "--example", "example1", "--dt", "-1"],
    ["roa", "--example", "example1", "--grid-box", "1,2,3"],
])
def test_usage_errors_exit_with_two(argv):
    assert main(argv) == 2


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == 0
    assert "verify" in capsys.readouterr().out


def test_config_file_supplies_defaults(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('[run]\ndt = 0.005\ntmax = 2.0\ntol = 0.01\ncase = "wscc9"\nlossless = true\n')
    args = build_parser().parse_args(["cct", "--config", str(config), "--tol", "0.02"])
    cfg = build_run_config(args)
    assert cfg.dt == 0.005
    assert cfg.t_max == 2.0
    assert cfg.tol == 0.02
    assert cfg.case_path == "wscc9"
    assert cfg.lossless is True
    assert cfg.per_angle_bounds is True
    assert cfg.transfer_conductances is False
    assert cfg.uep_bounds is True


def test_config_file_rejects_unknown_keys(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text("[run]\nspeed = 3\n")
    args = build_parser().parse_args(["verify", "--config", str(config)])
    with pytest.raises(ConfigError):
        build_run_config(args)


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig("cct", dt=0.01, t_max=0.005)
    with pytest.raises(ConfigError):
        RunConfig("cct", format="xml")
    assert RunConfig("cct", contingencies=("bus:8,line:8-9",)).contingency_list()[0].faulted_bus == 8


def test_verify_single_example(capsys):
    code = main(["verify", "--example", "example1", "--samples", "32", "--facet-samples", "20", "--t-end", "40"])
    lines = capsys.readouterr().out.splitlines()
    assert code == 0
    assert [line.split()[1] for line in lines] == ["facet_flow", "trajectory_invariance", "limit_residual"]
    assert all(line.split()[2] == "pass" for line in lines)


def test_verify_output_is_deterministic(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    for out in (first, second):
        main(["verify", "--example", "example2", "--samples", "16", "--facet-samples", "10", "--t-end", "20",
              "--format", "json", "--output", str(out)])
    assert first.read_bytes() == second.read_bytes()


def test_unknown_log_level_falls_back(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("ROA_LOG", "chatty")
    assert main(["roa", "--example", "example1", "--resolution", "2"]) == 0


def test_model_flags_reach_the_settings():
    args = build_parser().parse_args(["cct", "--case", "wscc9", "--contingency", "bus:8,line:8-9",
                                      "--transfer-conductances", "--symmetric-bounds"])
    settings = build_run_config(args).cct_settings()
    assert settings.transfer_conductances is True
    assert settings.uep_bounds is False


def test_symmetric_bounds_widen_the_contingency_polytope(remote_case_file, capsys):
    argv = ["roa", "--case", remote_case_file, "--contingency", "bus:4,line:3-4"]
    assert main(argv) == 0
    tight = json.loads(capsys.readouterr().out)["omega_e"]["b"]
    assert main(argv + ["--symmetric-bounds"]) == 0
    wide = json.loads(capsys.readouterr().out)["omega_e"]["b"]
    assert sum(wide) > sum(tight)


def test_emit_checks_what_it_wrote(tmp_path, monkeypatch):
    out = tmp_path / "artifact.txt"
    emit("x,y\n1,2\n", str(out))
    assert out.read_bytes() == b"x,y\n1,2\n"
    monkeypatch.setattr("roa_invariance.cli.file_digest", lambda path: "deadbeef")
    with pytest.raises(RoaError):
        emit("x,y\n", str(out))
