import json
import math

import numpy as np
import pytest

from compgeo import comparison_engine as ce
from compgeo import geometry_core as gc

QUICK = ce.QuadSettings(degree=5)
GRID = [0.3, 0.6, 0.9]


def test_quad_settings_validation():
    assert ce.QuadSettings.from_dict(None) == ce.QuadSettings()
    with pytest.raises(ce.ConfigError):
        ce.QuadSettings.from_dict({"degre": 5})
    with pytest.raises(ce.ConfigError):
        ce.QuadSettings.from_dict({"sphere": "lebedev"})
    with pytest.raises(ce.ConfigError):
        ce.QuadSettings.from_dict({"rtol": 0.0})
    assert "seed" not in ce.QuadSettings().describe()
    assert "degree" not in ce.QuadSettings(sphere="mc").describe()
    assert "jobs" not in ce.QuadSettings(jobs=4).describe()


def _report(rows, hyps):
    return ce.ComparisonReport("t", {}, [0.5], rows, hyps, {}).finalize()


def test_verdict_logic():
    row = lambda slack, needs=(): ce.Row("c", 0.5, 0.0, 0.0, slack, 1e-9, "lhs<=rhs", needs)  # noqa: E731
    assert _report([row(1e-10), row(-5e-10)], []).verdict == "pass"
    assert _report([row(-1e-6)], []).verdict == "fail"
    h = ce.Hypothesis("h", "", "sampled", "hypothesis", holds=False)
    rep = _report([row(-1e-6, ("h",))], [h])
    assert rep.verdict == "hypothesis-violated" and rep.rows[0].verdict == "hypothesis-violated"
    gate = ce.Hypothesis("g", "", "sampled", "gate", holds=False)
    rep = _report([row(-1e-6, ("g",))], [gate])
    assert rep.verdict == "pass" and rep.rows[0].verdict == "not-applicable"
    # an unconditional failure outranks a violated hypothesis
    assert _report([row(-1e-6), row(-1e-6, ("h",))], [h]).verdict == "fail"


def test_hyperbolic_plane_equality():
    rep = ce.check_laplacian_point(gc.hyperbolic(2), None, -1.0, GRID, QUICK)
    assert rep.verdict == "pass"
    lap = rep.select("laplacian")
    assert all(abs(r.lhs - 1 / math.tanh(r.r)) < 1e-7 for r in lap)
    assert max(abs(r.slack) for r in rep.rows) < 1e-8


def test_report_serialisation():
    rep = ce.check_area_volume(gc.sphere(2), None, 0.0, GRID, QUICK)
    assert rep.verdict == "pass" and rep.min_slack() > 0
    doc = json.loads(rep.to_json())
    assert doc["schema_version"] == ce.SCHEMA_VERSION
    assert len(doc["rows"]) == len(rep.rows)
    assert "run" not in rep.to_dict(include_run=False)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "r,lhs,rhs,slack,err,check,verdict"
    assert len(lines) == len(rep.rows) + 1
    area = rep.select("area")[0]
    # |S(r)| on the unit sphere is 2 pi sin r
    assert area.lhs == pytest.approx(2 * math.pi * math.sin(0.3), rel=1e-8)


def test_ricci_sign_violation_is_reported():
    rep = ce.check_area_volume(gc.sphere(2), None, 1.5, GRID, QUICK)
    hyp = {h.name: h for h in rep.hypotheses}
    assert hyp["ball_ricci_sign"].holds is False
    assert {r.verdict for r in rep.rows if r.needs} == {"hypothesis-violated"}
    # the sphere-weighted bounds are unconditional and hold
    assert all(r.verdict == "pass" for r in rep.rows if r.check.endswith("_sphere"))
    # the ball-integral form is not implied here and is reported as failing
    assert any(r.verdict == "fail" for r in rep.select("area_ratio_derivative"))


def test_kahler_checks_need_kahler_manifold():
    with pytest.raises(ce.ConfigError):
        ce.check_kahler_point(gc.sphere(2), None, 1.0, 4.0, [0.5], QUICK)


def test_geodesic_distance_on_sphere():
    def lift(x):
        x = np.asarray(x, dtype=float)
        return np.append(2 * x, 1 - x @ x) / (1 + x @ x)

    a, b = [0.2, 0.0], [0.0, 0.3]
    exact = math.acos(float(lift(a) @ lift(b)))
    assert ce.geodesic_distance(gc.sphere(2), a, b) == pytest.approx(exact, abs=1e-8)


def test_model_ball_eigenvalue_flat_disk():
    # first Dirichlet eigenvalue of the unit disk is j_{0,1}^2
    assert ce.model_ball_eigenvalue(2, 0.0, 1.0) == pytest.approx(2.404825557695773 ** 2, rel=1e-9)


def test_cache_is_clearable():
    ce.check_laplacian_point(gc.sphere(2), None, 1.0, [0.5], QUICK)
    ce.clear_cache()
    rep = ce.check_laplacian_point(gc.sphere(2), None, 1.0, [0.5], QUICK)
    assert rep.verdict == "pass"
