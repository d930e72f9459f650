import json
from importlib import resources

import pytest

from compgeo import cli

QUICK = {"degree": 5}


def scenario(tmp_path, theorems, k=0.0, **extra):
    doc = {"name": "tmp", "k": k, "theorems": theorems, **extra}
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(autouse=True)
def _fresh_manifolds():
    cli._MANIFOLDS.clear()
    yield


def test_pass_exit_and_report(tmp_path, capsys):
    path = scenario(tmp_path, [{"id": "laplacian", "manifold": "sphere", "r_grid": [0.5], "quadrature": QUICK}])
    out = tmp_path / "out"
    assert cli.main(["check", path, "--out", str(out)]) == cli.EXIT_PASS
    doc = json.loads((out / "tmp.json").read_text())
    assert doc["exit_code"] == 0
    assert "exit 0" in capsys.readouterr().out


def test_fail_exit(tmp_path):
    # Gunther against the flat model on the round sphere: the ball-integral rows fail
    path = scenario(tmp_path, [{"id": "gunther", "manifold": "sphere", "r_grid": [0.5], "quadrature": QUICK}])
    assert cli.main(["check", path]) == cli.EXIT_FAIL


def test_hypothesis_exit(tmp_path):
    path = scenario(tmp_path, [{"id": "area_volume", "r_grid": [0.1, 0.2]}], manifold="product",
                    quadrature={"degree": 9, "ode_tol": 1e-12, "rtol": 1e-11, "atol": 1e-14})
    assert cli.main(["check", path]) == cli.EXIT_HYPOTHESIS


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["check", str(bad)]) == cli.EXIT_CONFIG
    path = scenario(tmp_path, [{"id": "laplacian", "manifold": "sphere", "r_grid": [0.5], "colour": 1}])
    assert cli.main(["check", path]) == cli.EXIT_CONFIG
    path = scenario(tmp_path, [{"id": "laplacian", "manifold": "sphere", "r_grid": [0.5]}])
    assert cli.main(["check", path, "--jobs", "0"]) == cli.EXIT_CONFIG
    assert cli.main(["check", path, "--tol", "-1"]) == cli.EXIT_CONFIG
    assert cli.main(["frobnicate"]) == cli.EXIT_CONFIG
    assert cli.main(["sweep", path, "--theorem", "nonsense"]) == cli.EXIT_CONFIG


def test_config_error_outranks_fail(tmp_path):
    path = scenario(tmp_path, [
        {"id": "gunther", "manifold": "sphere", "r_grid": [0.5], "quadrature": QUICK},
        {"id": "laplacian", "manifold": "no_such_manifold", "r_grid": [0.5]},
    ])
    assert cli.main(["check", path]) == cli.EXIT_CONFIG


def test_sweep_csv(tmp_path, capsys):
    path = scenario(tmp_path, [{"id": "laplacian", "manifold": "sphere", "r_grid": [0.4, 0.8], "quadrature": QUICK}])
    assert cli.main(["sweep", path, "--theorem", "laplacian"]) == cli.EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "r,lhs,rhs,slack,err,check,verdict"
    out = tmp_path / "csv"
    assert cli.main(["sweep", path, "--theorem", "laplacian", "--out", str(out)]) == cli.EXIT_PASS
    assert (out / "tmp_0_laplacian.csv").read_text().splitlines() == lines


def test_jobs_do_not_change_numbers(tmp_path, monkeypatch, capsys):
    path = scenario(tmp_path, [{"id": "area_volume", "manifold": "sphere", "r_grid": [0.5], "quadrature": QUICK}])
    cli.main(["sweep", path, "--theorem", "area_volume", "--jobs", "1"])
    serial = capsys.readouterr().out
    monkeypatch.setenv("COMPGEO_JOBS", "4")
    cli.main(["sweep", path, "--theorem", "area_volume"])
    assert capsys.readouterr().out == serial


def test_eigen_command(capsys):
    assert cli.main(["eigen", "--model", "flat", "--r", "1.0", "--n", "2"]) == cli.EXIT_PASS
    line = capsys.readouterr().out.strip()
    assert line.startswith("n=2 r=1 lambda1=")
    assert float(line.split("=")[-1]) == pytest.approx(2.404825557695773 ** 2, rel=1e-9)
    assert cli.main(["eigen", "--model", "not-a-model", "--r", "1.0"]) == cli.EXIT_CONFIG


def test_list_manifolds(capsys):
    assert cli.main(["list-manifolds"]) == cli.EXIT_PASS
    names = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert "sphere" in names and "fubini_study" in names


def test_sweep_gunther_h3_fixture(capsys):
    path = str(resources.files("compgeo") / "fixtures" / "gunther_h3_sweep.json")
    assert cli.main(["sweep", path, "--theorem", "gunther"]) == cli.EXIT_PASS
    rows = [line.split(",") for line in capsys.readouterr().out.splitlines()[1:] if not line.startswith("#")]
    density = [float(r[3]) for r in rows if r[5] == "density" and float(r[0]) == 1.0]
    # F = sinh(1)^2 against the flat-model bound, slack about 0.0133
    assert density and density[0] == pytest.approx(0.0133, abs=5e-4)
