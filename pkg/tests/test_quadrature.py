import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compgeo import quadrature as q


def _monomial_integral(d, exps):
    # int over S^d of prod x_i^{a_i}
    exps = list(exps) + [0] * (d + 1 - len(exps))
    if any(a % 2 for a in exps):
        return 0.0
    b = [(a + 1) / 2 for a in exps]
    return 2 * math.prod(math.gamma(x) for x in b) / math.gamma(sum(b))


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, q.MAX_GAUSS_DIM), exps=st.lists(st.integers(0, 4), min_size=1, max_size=3))
def test_gauss_rule_exact_for_low_degree(d, exps):
    exps = exps[: d + 1]
    deg = sum(exps)
    rule = q.sphere_rule(d, "gauss", max(deg, 1))
    vals = np.prod([rule.nodes[:, i] ** a for i, a in enumerate(exps)], axis=0)
    assert float(rule.weights @ vals) == pytest.approx(_monomial_integral(d, exps), abs=1e-12)


@pytest.mark.parametrize("d", [0, 1, 2, 3])
def test_total_area(d):
    rule = q.sphere_rule(d, "gauss", 3)
    assert math.fsum(rule.weights) == pytest.approx(q.sphere_area(d), rel=1e-12)
    assert np.allclose(np.linalg.norm(rule.nodes, axis=1), 1.0)


def test_sphere_area_values():
    assert q.sphere_area(1) == pytest.approx(2 * math.pi)
    assert q.sphere_area(2) == pytest.approx(4 * math.pi)
    with pytest.raises(ValueError):
        q.sphere_area(-1)


def test_mc_rule_depends_only_on_seed():
    a = q.sphere_rule(2, "mc", 5, count=64)
    b = q.sphere_rule(2, "mc", 5, count=128)
    assert np.array_equal(a.nodes, b.nodes[:64])
    c = q.sphere_rule(2, "mc", 6, count=64)
    assert not np.allclose(a.nodes, c.nodes)


def test_counter_uniform_range_and_keying():
    u = q.counter_uniform(1, np.arange(10000), 0)
    assert np.all((u > 0) & (u < 1))
    assert abs(u.mean() - 0.5) < 0.02
    assert not np.array_equal(u, q.counter_uniform(1, np.arange(10000), 1))


def test_integrate_sphere_and_errors():
    rule = q.sphere_rule(2, "gauss", 7)
    val, err = q.integrate_sphere(rule, lambda x: x[2] ** 2)
    assert val == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert err < 1e-12
    mc = q.sphere_rule(2, "mc", 3, count=2000)
    val, err = q.integrate_sphere(mc, lambda x: x[2] ** 2)
    assert abs(val - 4 * math.pi / 3) < 5 * err
    with pytest.raises(q.NanAtNodeError):
        q.integrate_sphere(rule, lambda x: math.nan)


def test_parallel_map_order_independent_of_jobs():
    items = list(range(50))
    assert q.parallel_map(lambda x: x * x, items, 1) == q.parallel_map(lambda x: x * x, items, 8)


def test_radial_and_legendre():
    val, _ = q.integrate_radial(math.sin, 0.0, math.pi)
    assert val == pytest.approx(2.0, abs=1e-10)
    x, w = q.gauss_legendre(0.0, 2.0, 6)
    assert float(w @ x ** 5) == pytest.approx(2 ** 6 / 6)


def test_rule_validation():
    with pytest.raises(ValueError):
        q.sphere_rule(2, "simpson", 3)
    with pytest.raises(ValueError):
        q.sphere_rule(2, "gauss", 0)


def test_high_dimension_falls_back_to_monte_carlo():
    with pytest.warns(UserWarning):
        rule = q.sphere_rule(q.MAX_GAUSS_DIM + 2, "gauss", 3)
    assert rule.kind == "monte-carlo"
    assert math.fsum(rule.weights) == pytest.approx(q.sphere_area(rule.d), rel=1e-12)
