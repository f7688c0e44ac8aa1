import csv
import json

import pytest

from vemstokes import cli


def _run(tmp_path, *args):
    return cli.main(list(args) + ["--out", str(tmp_path)])


def test_solve_writes_outputs(tmp_path, capsys):
    assert _run(tmp_path, "solve", "--case", "test1", "--r", "2", "--n", "4") == cli.EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["iterations"] == "1|1" and summary["err_u"] < 0.05
    assert summary["div_ratio"] <= 1e-9
    with open(tmp_path / "solution.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 16 * 5
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["n"] == 4 and cfg["command"] == "solve"
    assert "N1|N2 = 1|1" in capsys.readouterr().out


def test_config_file_and_flag_override(tmp_path):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"case": "test1", "r": 1.75, "n": 2, "tol": 1e-6}))
    cfg, _ = cli.make_config(["solve", "--config", str(conf), "--n", "3"])
    assert cfg.r == 1.75 and cfg.n == 3 and cfg.tol == 1e-6
    conf.write_text(json.dumps({"colour": "red"}))
    with pytest.raises(ValueError, match="colour"):
        cli.make_config(["solve", "--config", str(conf)])


@pytest.mark.parametrize("args", [["solve", "--r", "2.5"], ["solve", "--r", "1.0"],
                                  ["solve", "--mesh", "file"], ["study", "--levels", "4"],
                                  ["check", "--suites", "nothing"], ["frobnicate"]])
def test_usage_errors_exit_one(tmp_path, args, capsys):
    assert _run(tmp_path, *args) == cli.EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_missing_mesh_file_exits_one(tmp_path):
    code = _run(tmp_path, "solve", "--mesh", "file", "--mesh-file", str(tmp_path / "absent.json"))
    assert code == cli.EXIT_USAGE


def test_mesh_file_solve(tmp_path):
    from vemstokes import mesh as M
    path = tmp_path / "m.json"
    M.save_mesh(M.generate_quadrilateral_distorted(3, beta=0.1), path)
    assert _run(tmp_path, "solve", "--mesh", "file", "--mesh-file", str(path)) == cli.EXIT_OK


def test_lid_driven_case(tmp_path):
    assert _run(tmp_path, "solve", "--case", "custom", "--r", "1.5", "--n", "4") == cli.EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "err_u" not in summary and summary["div_ratio"] <= 1e-9


def test_study_writes_tables(tmp_path, capsys):
    assert _run(tmp_path, "study", "--case", "test1", "--r", "2", "--levels", "2", "4") == cli.EXIT_OK
    data = json.loads((tmp_path / "test1_r2_d1.json").read_text())
    assert len(data["levels"]) == 2 and data["acr"]["err_u"] > 1.5
    assert "a.c.r." in capsys.readouterr().out


def test_numerical_failure_exits_two(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise cli.SolverError("singular pivot at unknown 3")
    monkeypatch.setattr(cli, "solve_case", broken)
    assert _run(tmp_path, "solve", "--n", "2") == cli.EXIT_NUMERIC
    assert "unknown 3" in (tmp_path / "failure.txt").read_text()


def test_check_command(tmp_path, capsys):
    assert _run(tmp_path, "check", "--suites", "patch", "regularity") == cli.EXIT_OK
    lines = (tmp_path / "check.txt").read_text().splitlines()
    assert lines[0].startswith("[PASS] patch test") and lines[1].startswith("[PASS] mesh regularity")
    # an impossible regularity threshold fails and lists the violations
    assert _run(tmp_path, "check", "--suites", "regularity", "--rho", "0.99") == cli.EXIT_NUMERIC
    assert "warning" in capsys.readouterr().out
