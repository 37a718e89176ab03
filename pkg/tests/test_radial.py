import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from quadnls.radial import (
    RadialField,
    RadialGrid,
    ball_volume,
    central_derivative,
    gradient_norm_sq,
    inner,
    integrate,
    laplacian,
    make_grid,
    sphere_area,
)

dims = st.integers(min_value=1, max_value=6)
sizes = st.integers(min_value=16, max_value=300)


@given(dims, st.floats(0.5, 40.0), sizes)
def test_weights_sum_to_ball_volume(d, r_max, n):
    g = make_grid(d, r_max, n)
    assert g.weights.sum() == pytest.approx(ball_volume(d, r_max), rel=1e-12)


def test_sphere_area_known_values():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(6) == pytest.approx(math.pi**3)


@given(dims, sizes)
def test_laplacian_exact_on_r_squared(d, n):
    g = make_grid(d, 5.0, n)
    lap = laplacian(g, g.nodes**2, boundary_value=g.r_max**2)
    # the ghost extrapolation is linear, so the last cell sees an O(dr^2) defect
    np.testing.assert_allclose(lap[:-1], 2 * d, rtol=1e-9)


@settings(max_examples=40)
@given(dims, sizes, st.integers(0, 2**32 - 1))
def test_laplacian_self_adjoint_and_matches_gradient_form(d, n, seed):
    rng = np.random.default_rng(seed)
    g = make_grid(d, 3.0, n)
    f = rng.normal(size=n) + 1j * rng.normal(size=n)
    h = rng.normal(size=n) + 1j * rng.normal(size=n)
    lhs = inner(g, laplacian(g, f), h)
    rhs = inner(g, f, laplacian(g, h))
    assert abs(lhs - rhs) <= 1e-10 * (abs(lhs) + 1)
    # -<Δf, f> is exactly the wall-inclusive gradient norm
    assert -inner(g, laplacian(g, f), f).real == pytest.approx(gradient_norm_sq(g, f), rel=1e-10)


def test_laplacian_second_order_on_gaussian():
    errs = []
    for n in (256, 512, 1024):
        g = make_grid(5, 10.0, n)
        r = g.nodes
        exact = (4 * r**2 - 2 * 5) * np.exp(-(r**2))
        errs.append(np.max(np.abs(laplacian(g, np.exp(-(r**2))) - exact)))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


@pytest.mark.parametrize("d", [4, 5, 6])
def test_gradient_norm_against_quadrature(d):
    g = make_grid(d, 12.0, 4096)
    f = np.exp(-(g.nodes**2))
    exact = sphere_area(d) * quad(lambda r: (2 * r * math.exp(-r * r)) ** 2 * r ** (d - 1), 0, np.inf)[0]
    assert gradient_norm_sq(g, f) == pytest.approx(exact, rel=1e-5)
    assert integrate(g, f**2) == pytest.approx(sphere_area(d) * quad(lambda r: math.exp(-2 * r * r) * r ** (d - 1), 0, np.inf)[0], rel=1e-5)


def test_wall_term_only_matters_for_nonzero_boundary_values():
    g = make_grid(5, 8.0, 256)
    f = np.exp(-(g.nodes**2))
    assert gradient_norm_sq(g, f) == gradient_norm_sq(g, f, wall=False)
    h = np.ones(g.n)
    assert gradient_norm_sq(g, h, wall=False) == 0.0
    assert gradient_norm_sq(g, h) > 0.0


def test_central_derivative_second_order():
    errs = []
    for n in (1024, 2048):
        g = make_grid(5, 10.0, n)
        r = g.nodes
        d = central_derivative(g, np.exp(-(r**2)))
        errs.append(np.max(np.abs(d - (-2 * r * np.exp(-(r**2))))))
    assert errs[1] < 1e-4
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)


@pytest.mark.parametrize("kwargs", [dict(d=0, r_max=1.0, n=32), dict(d=7, r_max=1.0, n=32), dict(d=3, r_max=-1.0, n=32), dict(d=3, r_max=1.0, n=8)])
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        RadialGrid(**kwargs)


def test_field_checks():
    g = make_grid(3, 1.0, 32)
    with pytest.raises(ValueError):
        RadialField(g, np.ones(31))
    with pytest.raises(ValueError):
        RadialField(g, 1j * np.ones(32), real=True)
    with pytest.raises(ValueError):
        laplacian(g, RadialField(make_grid(3, 1.0, 64), np.ones(64)))


def test_refine_and_dimension_change():
    g = make_grid(4, 2.0, 64)
    assert g.refine().n == 128 and g.refine().dr == pytest.approx(g.dr / 2)
    assert g.with_dimension(6).d == 6
    assert g.same_as(make_grid(4, 2.0, 64))
