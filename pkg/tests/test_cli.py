import json

import pytest

from nlparabolic import cli
from nlparabolic import fixed_point as fp


def run(*argv):
    try:
        return cli.main(list(argv))
    except SystemExit as exc:  # argparse failures
        return exc.code


def test_check_ellipticity_heat(tmp_path, capsys):
    assert run("check-ellipticity", "--problem", "heat", "--out", str(tmp_path)) == 0
    report = json.loads((tmp_path / "ellipticity.json").read_text())
    assert report["lambda"] == 1.0 and report["elliptic"]


def test_check_ellipticity_backward_heat(tmp_path):
    assert run("check-ellipticity", "--problem", "backward_heat", "--out", str(tmp_path)) == 1


def test_check_ellipticity_arctan(tmp_path):
    assert run("check-ellipticity", "--problem", "arctan", "--out", str(tmp_path)) == 0
    lam = json.loads((tmp_path / "ellipticity.json").read_text())["lambda"]
    assert 0 < lam <= 1


@pytest.mark.parametrize("argv", [
    ["solve", "--alpha", "1.5"],
    ["solve", "--grid-n", "33"],
    ["solve", "--problem", "nope"],
    ["verify", "--suite", "nope"],
    ["solve", "--tol", "-1"],
    ["solve", "--problem", "heat", "--n", "2"],
    ["bogus-command"],
    ["solve", "--dt", "abc"],
])
def test_config_errors_exit_64(argv):
    assert run(*argv) == 64


def test_solve_heat_defaults(tmp_path):
    assert run("solve", "--problem", "heat", "--out", str(tmp_path)) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["converged"]
    assert summary["residual"] <= 1e-3
    assert summary["max_error_vs_exact"] <= 1e-3


def test_solve_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run("solve", "--problem", "arctan", "--delta", "0.01", "--seed", "3", "--out", str(out)) == 0
    for name in ("trajectory.csv", "trace.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "trajectory.csv").read_text().splitlines()[0] == "t,x,u_1"
    assert (a / "trace.csv").read_text().splitlines()[0] == "iter,distance,factor,cond31,cond33,cond37,delta"
    assert "max_error_vs_exact" in json.loads((a / "summary.json").read_text())


def test_system_trajectory_header(tmp_path):
    assert run("solve", "--problem", "system", "--delta", "0.005", "--out", str(tmp_path)) == 0
    assert (tmp_path / "trajectory.csv").read_text().splitlines()[0] == "t,x,u_1,u_2"


def test_no_contraction_horizon_exit_2(tmp_path, monkeypatch):
    def fail(*args, **kwargs):
        raise fp.NoContractionHorizon("forced")

    monkeypatch.setattr(fp, "solve_nonlinear", fail)
    assert run("solve", "--problem", "semilinear", "--out", str(tmp_path)) == 2


def test_config_file_and_override(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# sample\nproblem = arctan\nalpha = 0.4  # exponent\n\ndelta = 0.01\n")
    args = cli.make_parser().parse_args(["solve", "--config", str(conf), "--alpha", "0.3"])
    cfg = cli.build_config(args)
    assert cfg.problem == "arctan" and cfg.delta == 0.01 and cfg.alpha == 0.3


def test_config_file_rejects_bad_line(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("problem heat\n")
    assert run("solve", "--config", str(conf)) == 64


def test_config_file_rejects_unknown_key(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("colour = blue\n")
    assert run("solve", "--config", str(conf)) == 64


def test_verify_transport(tmp_path, capsys):
    assert run("verify", "--suite", "transport", "--out", str(tmp_path)) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("[PASS]") for line in lines)


def test_verify_garding(tmp_path, capsys):
    assert run("verify", "--suite", "garding", "--out", str(tmp_path)) == 0
    assert "equals 0.5" in capsys.readouterr().out


def test_holder_norm(tmp_path):
    assert run("holder-norm", "--problem", "heat", "--out", str(tmp_path)) == 0
    report = json.loads((tmp_path / "holder_norm.json").read_text())
    assert report["total"] > 0


def test_residual_tolerance_enforced(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("problem = heat\ndt = 1e-4\nresidual_tol = 1e-3\n")
    assert run("solve", "--config", str(conf), "--out", str(tmp_path)) == 1
    assert not json.loads((tmp_path / "summary.json").read_text())["residual_ok"]
