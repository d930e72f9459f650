import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compgeo import scalar_models as sm
from compgeo.scalar_models import CurvatureProfile


coef = st.floats(-1.5, 1.5, allow_nan=False)


@settings(max_examples=15, deadline=None)
@given(a=coef, b=coef, c=coef)
def test_wronskian_is_minus_one(a, b, c):
    prof = CurvatureProfile.from_callable(lambda t: a + b * np.sin(2 * t) + c * np.cos(t), 2.5)
    basis = sm.solve_basis(prof, 2.5)
    t = np.linspace(0.0, 2.5, 301)
    assert np.max(np.abs(basis.wronskian(t) + 1.0)) < 1e-9


@pytest.mark.parametrize("k", [-3.0, -0.25, 0.0, 0.7, 2.0])
def test_numeric_matches_closed_form(k):
    T = 2.0 if k <= 0 else min(2.0, 0.99 * math.pi / math.sqrt(k))
    b = sm.solve_basis(CurvatureProfile.constant(k), T, method="numeric")
    t = np.linspace(0.0, T, 257)
    for got, exact in zip(b.values(t), sm.closed_form(k, t)):
        assert np.max(np.abs(got - exact)) < 1e-8
    assert np.max(np.abs(b.d2s(t) + k * b.s(t))) < 1e-7


def test_closed_form_initial_data():
    for k in (-1.0, 0.0, 1.0):
        s, ds, c, dc = sm.closed_form(k, 0.0)
        assert np.allclose([s, ds, c, dc], [0.0, 1.0, 1.0, 0.0])


def test_first_zero_sphere_and_none_for_hyperbolic():
    b = sm.solve_basis(CurvatureProfile.constant(1.0), 4.0)
    assert abs(sm.first_zero(b) - math.pi) < 1e-10
    assert abs(sm.first_zero(b, "c") - math.pi / 2) < 1e-10
    assert sm.first_zero(sm.solve_basis(CurvatureProfile.constant(-1.0), 4.0)) is None


def test_first_zero_scaled_curvature():
    b = sm.solve_basis(CurvatureProfile.constant(4.0), 2.0, method="numeric", tol=1e-12)
    assert abs(sm.first_zero(b) - math.pi / 2) < 1e-9


def test_table_profile_interpolates_and_roundtrips():
    prof = CurvatureProfile.table([0.0, 1.0, 2.0], [1.0, 0.0, -1.0])
    assert prof(0.5) == pytest.approx(0.5)
    again = CurvatureProfile.from_json(prof.to_json())
    assert again(1.5) == pytest.approx(-0.5)
    assert CurvatureProfile.from_json({"kind": "constant", "k": 2.0})(7.0) == 2.0


def test_table_validation():
    with pytest.raises(ValueError):
        CurvatureProfile.table([0.0, 0.0, 1.0], [1.0, 1.0, 1.0])
    with pytest.raises(sm.ProfileDomainError):
        CurvatureProfile.table([0.5, 1.0], [1.0, 1.0])
    with pytest.raises(sm.ProfileDomainError):
        CurvatureProfile.table([0.0, 1.0], [1.0, 1.0])(1.5)
    with pytest.raises(ValueError):
        CurvatureProfile.table([0.0, 1.0, 2.0], [0.0, 5.0, 0.0], modulus=1.0)


def test_solve_basis_rejects_short_profile():
    prof = CurvatureProfile.table([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(sm.ProfileDomainError):
        sm.solve_basis(prof, 2.0)
    with pytest.raises(ValueError):
        sm.solve_basis(CurvatureProfile.constant(0.0), -1.0)


def test_ct_and_tg_denominators():
    b = sm.solve_basis(CurvatureProfile.constant(1.0), 3.5)
    assert sm.ct(b, 1.0) == pytest.approx(1.0 / math.tan(1.0))
    assert sm.tg(b, 1.0) == pytest.approx(math.tan(1.0))
    with pytest.raises(sm.DenominatorZeroError):
        sm.ct(b, 0.0)


def test_model_quantities_flat_and_sphere():
    flat = sm.solve_basis(CurvatureProfile.constant(0.0), 3.0)
    area, vol = sm.model_area_volume(flat, 3, 1.5)
    assert area == pytest.approx(4 * math.pi * 1.5 ** 2, rel=1e-12)
    assert vol == pytest.approx(4 / 3 * math.pi * 1.5 ** 3, rel=1e-9)
    sph = sm.solve_basis(CurvatureProfile.constant(1.0), 3.0)
    area, vol = sm.model_area_volume(sph, 2, 1.0)
    assert vol == pytest.approx(2 * math.pi * (1 - math.cos(1.0)), rel=1e-9)
    assert sm.model_laplacian(sph, 3, 1.0) == pytest.approx(2 / math.tan(1.0))
    long = sm.solve_basis(CurvatureProfile.constant(1.0), 4.0)
    with pytest.raises(sm.NegativeDensityError):
        sm.model_area_volume(long, 2, 3.5)


def test_kahler_model_matches_cp2():
    b1 = sm.solve_basis(CurvatureProfile.constant(1.0), 1.5)
    b2 = sm.solve_basis(CurvatureProfile.constant(4.0), 1.5)
    r = 0.9
    assert sm.kahler_model_density(b1, b2, 2, r) == pytest.approx(math.sin(r) ** 2 * 0.5 * math.sin(2 * r))
    lap = sm.kahler_model_laplacian(b1, b2, 2, r)
    assert lap == pytest.approx(2 / math.tan(r) + 2 / math.tan(2 * r))
