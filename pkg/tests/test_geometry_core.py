import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compgeo import geometry_core as gc
from compgeo.scalar_models import CurvatureProfile

point3 = st.lists(st.floats(-0.4, 0.4), min_size=3, max_size=3).map(np.array)


def test_euclidean_is_flat():
    M = gc.euclidean(3)
    assert np.max(np.abs(gc.christoffel(M, np.array([0.3, -1.0, 2.0])))) < 1e-10
    assert np.max(np.abs(gc.riemann(M, np.zeros(3)).Rm)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(x=point3)
def test_sphere_sectional_constant(x):
    M = gc.sphere(3)
    C = gc.riemann(M, x)
    assert C.sectional([1.0, 0.2, 0.0], [0.0, 1.0, -0.5]) == pytest.approx(1.0, abs=1e-6)
    assert C.scalar == pytest.approx(6.0, abs=1e-5)


@settings(max_examples=10, deadline=None)
@given(x=point3)
def test_hyperbolic_ricci(x):
    M = gc.hyperbolic(3)
    C = gc.riemann(M, x)
    assert np.allclose(C.ric, -2.0 * C.g, atol=1e-6)


def test_riemann_symmetries():
    C = gc.riemann(gc.builtin("product"), np.array([0.1, -0.2, 0.3, 0.05]))
    Rm = C.Rm
    assert np.allclose(Rm, -np.swapaxes(Rm, 0, 1), atol=1e-8)
    assert np.allclose(Rm, np.transpose(Rm, (2, 3, 0, 1)), atol=1e-8)
    bianchi = Rm + np.transpose(Rm, (0, 2, 3, 1)) + np.transpose(Rm, (0, 3, 1, 2))
    assert np.max(np.abs(bianchi)) < 1e-8


def test_product_scalar_zero_and_mixed_planes():
    M = gc.builtin("product")
    x = np.array([0.2, 0.1, -0.3, 0.2])
    C = gc.riemann(M, x)
    assert abs(C.scalar) < 1e-6
    g = C.g
    e = [v / math.sqrt(v @ g @ v) for v in np.eye(4)]
    assert C.sectional(e[0], e[1]) == pytest.approx(-1.0, abs=1e-6)
    assert C.sectional(e[2], e[3]) == pytest.approx(1.0, abs=1e-6)
    assert C.sectional(e[0], e[2]) == pytest.approx(0.0, abs=1e-6)


def test_ellipsoid_gauss_curvature():
    M = gc.builtin("ellipsoid")
    x = np.array([0.3, -0.4])
    a, b, c = M.spec.get("axes", [1.0, 1.2, 0.8])
    assert gc.riemann(M, x).scalar / 2 == pytest.approx(gc.ellipsoid_gauss_curvature(a, b, c, x), rel=1e-5)


def test_warped_product_matches_sphere():
    M = gc.warped_product(CurvatureProfile.constant(1.0), 3, 2.5)
    C = gc.riemann(M, np.array([0.6, 0.2, 0.1]))
    assert np.allclose(C.ric, 2.0 * C.g, atol=1e-5)


def test_hat_curvatures_vanish_on_model():
    M = gc.sphere(3)
    x = np.array([0.1, 0.2, -0.1])
    g = M.metric_at(x)
    v = np.array([1.0, 0.0, 0.0]) / math.sqrt(g[0, 0])
    out = gc.hat_curvatures(M, x, 1.0, None, v, W=[[0.0, 1.0, 0.0]])
    assert abs(out["ric_hat"]) < 1e-6 and abs(out["k_hat"]) < 1e-6
    with pytest.raises(ValueError):
        gc.hat_curvatures(M, x, CurvatureProfile.table([0, 1], [1, 1]), None, v)


def test_fubini_study_kahler_identities():
    M = gc.fubini_study(2)
    x = np.array([0.2, -0.1, 0.3, 0.05])
    assert gc.check_parallel_J(M, x) < 1e-6
    C = gc.riemann(M, x)
    J = M.J(x)
    assert np.allclose(J @ J, -np.eye(4), atol=1e-12)
    assert np.allclose(J.T @ C.g @ J, C.g, atol=1e-10)
    # holomorphic curvature 4 means R = 2C
    assert np.max(np.abs(C.Rm - 2.0 * gc.c_tensor(C.g, J))) < 1e-5
    u = np.array([1.0, 0.0, 0.0, 0.0])
    w = np.array([0.0, 1.0, 0.0, 0.0])
    kc = gc.kahler_curvatures(M, x, u / math.sqrt(u @ C.g @ u), pi1=u, pi2=w, curv=C)
    assert kc["H"] == pytest.approx(4.0, abs=1e-5)
    assert kc["ric_perp"] == pytest.approx(2.0, abs=1e-5)


def test_model_tensors_on_cp1():
    M = gc.fubini_study(1)
    x = np.array([0.1, 0.2])
    X, Y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    g = gc.riemann(M, x).g
    X, Y = X / np.sqrt(X @ g @ X), Y / np.sqrt(Y @ g @ Y)
    out = gc.model_tensors(M, x, 2.0, X, Y, Y, X)
    assert abs(out["R_hat_kahler"]) < 1e-5
    assert out["C"] == pytest.approx(2.0, abs=1e-10)
    # sectional curvature 4 on the single complex line
    assert out["R_hat_riemannian"] == pytest.approx(4.0 - 2.0 * out["B"], abs=1e-5)


def test_spec_errors_and_builtins():
    assert set(gc.list_builtins()) >= {"sphere", "hyperbolic", "product", "fubini_study", "warped"}
    with pytest.raises(gc.GeometryError):
        gc.from_spec({"type": "torus"})
    with pytest.raises(gc.GeometryError):
        gc.from_spec({"dim": 2})
    with pytest.raises(gc.GeometryError):
        gc.euclidean(2).J(np.zeros(2))


def test_degenerate_plane():
    C = gc.riemann(gc.sphere(2), np.zeros(2))
    with pytest.raises(gc.DegeneratePlaneError):
        C.sectional([1.0, 0.0], [2.0, 0.0])


def test_embedding_frames_orthonormal():
    M = gc.sphere(2)
    emb = gc.make_embedding(M, {"kind": "latitude", "theta0": 1.0})
    x, T, N, vol = emb.frames(np.array([0.4]))
    g = M.metric_at(x)
    B = np.concatenate([T, N], axis=1)
    assert np.allclose(B.T @ g @ B, np.eye(2), atol=1e-10)
    assert vol > 0


def test_equator_is_totally_geodesic():
    emb = gc.make_embedding(gc.sphere(3), {"kind": "equator", "ell": 2})
    z = np.array([0.3, 0.4])
    assert np.max(np.abs(emb.mean_curvature(z))) < 1e-6


def test_cp_line_is_complex():
    emb = gc.make_embedding(gc.fubini_study(2), {"kind": "cp_line"})
    assert emb.complex and emb.ell == 2
    emb.check_complex(np.array([0.3, 1.0]))
    with pytest.raises(gc.GeometryError):
        gc.make_embedding(gc.fubini_study(2), {"kind": "cp_line", "radius": 2.0})
