import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compgeo import geometry_core as gc
from compgeo import transport as tr



def unit(M, x, v):
    v = np.asarray(v, dtype=float)
    return v / math.sqrt(v @ M.metric_at(np.asarray(x, dtype=float)) @ v)


START = np.array([0.5, 0.0])
AROUND = unit(gc.sphere(2), START, [0.0, 1.0])


@pytest.fixture(scope="module")
def s2_record():
    return tr.shoot_geodesic(gc.sphere(2), START, AROUND, 3.0, tol=1e-11)


def test_unit_speed_and_parallel_frame(s2_record):
    M = s2_record.M
    for t in (0.0, 1.1, 2.9):
        x, v, E = s2_record.state(t)
        g = M.metric_at(x)
        assert v @ g @ v == pytest.approx(1.0, abs=1e-8)
        assert np.allclose(E.T @ g @ E, np.eye(2), atol=1e-8)
        assert np.allclose(E[:, -1], v, atol=1e-8)
    with pytest.raises(ValueError):
        s2_record.state(3.5)


def test_sphere_jacobi_is_sine(s2_record):
    jac = tr.jacobi(s2_record)
    ts = np.array([0.3, 1.0, 2.0, 2.8])
    J, Jp = jac.at(ts)
    assert np.allclose(J[:, 0, 0], np.sin(ts), atol=1e-8)
    assert np.allclose(Jp[:, 0, 0], np.cos(ts), atol=1e-8)
    assert jac.symplectic_defect() < 1e-8
    assert tr.laplacian_distance(jac, 1.0) == pytest.approx(1 / math.tan(1.0), abs=1e-7)
    assert tr.volume_density(jac)(1.2) == pytest.approx(math.sin(1.2), abs=1e-8)


def test_conjugate_point_guard():
    rec = tr.shoot_geodesic(gc.sphere(2), START, AROUND, 3.3, tol=1e-11)
    jac = tr.jacobi(rec)
    assert jac.conjugate_radius() == pytest.approx(math.pi, abs=1e-6)
    with pytest.raises(tr.PastConjugatePointError):
        tr.volume_density(jac)(3.2)
    with pytest.raises(tr.SingularJacobiError):
        tr.boundary_normalized(jac, jac.conjugate_radius(), [1.0])


def test_direct_and_interpolated_curvature_agree():
    M = gc.builtin("product")
    p = [0.1, -0.2, 0.3, 0.05]
    rec = tr.shoot_geodesic(M, p, unit(M, p, [1.0, 0.3, -0.5, 0.7]), 1.2)
    a = tr.jacobi(rec, curvature="interpolate")
    b = tr.jacobi(rec, curvature="direct")
    assert np.max(np.abs(a.at(1.2)[0] - b.at(1.2)[0])) < 1e-7


def test_shoot_many_matches_single():
    M = gc.hyperbolic(3)
    p = np.array([0.1, 0.2, -0.1])
    dirs = [unit(M, p, d) for d in ([1.0, 0.0, 0.0], [0.2, 1.0, 0.3], [-0.5, 0.1, 1.0])]
    many = tr.shoot_many(M, p, dirs, 1.0)
    for th, rec in zip(dirs, many):
        one = tr.shoot_geodesic(M, p, th, 1.0)
        assert np.allclose(rec.endpoint(), one.endpoint(), atol=1e-8)


def test_hyperbolic_density():
    M = gc.hyperbolic(3)
    p = [0.1, 0.0, 0.0]
    rec = tr.shoot_geodesic(M, p, unit(M, p, [0.0, 1.0, 0.0]), 1.5)
    F = tr.volume_density(tr.jacobi(rec))
    assert F(1.5) == pytest.approx(math.sinh(1.5) ** 2, rel=1e-7)
    assert F(0.0) == 0.0


def test_index_form_of_jacobi_field(s2_record):
    r = 2.0
    val = tr.index_form(s2_record, lambda t: [math.sin(t)], dY=lambda t: [math.cos(t)], r=r)
    assert val == pytest.approx(math.sin(r) * math.cos(r), abs=1e-7)


def test_adapted_jacobi_equator():
    emb = gc.make_embedding(gc.sphere(2), {"kind": "equator"})
    rec = tr.shoot_normal(emb, np.array([0.3]), np.array([1.0]), 1.2)
    jac = tr.jacobi(rec, init="adapted")
    # tangential field along a normal geodesic from a great circle is cos t
    assert jac.at(1.0)[0][0, 0] == pytest.approx(math.cos(1.0), abs=1e-8)


@settings(max_examples=25, deadline=None)
@given(phi=st.lists(st.floats(0.0, 2 * math.pi), min_size=1, max_size=4))
def test_polar_angles_unit(phi):
    assert np.linalg.norm(tr.polar_angles_to_direction(phi)) == pytest.approx(1.0)


def test_start_outside_chart():
    with pytest.raises(tr.LeftChartDomainError):
        tr.shoot_geodesic(gc.hyperbolic(2), [1.5, 0.0], [1.0, 0.0], 0.5)
