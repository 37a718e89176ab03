import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from quadnls.cutoff import Chi1, bound_constants, build_cutoff, chi_derivatives, radial_derivatives, validate_cutoff


def _plateau_oracle():
    x = sp.Symbol("x")
    smooth = 35 * x**4 - 84 * x**5 + 70 * x**6 - 20 * x**7
    return 1 + sp.integrate(2 * (1 + x) * (1 - smooth), (x, 0, 1))


def test_plateau_matches_symbolic_integral():
    exact = _plateau_oracle()
    assert exact == sp.Rational(41, 18)
    assert Chi1().plateau == pytest.approx(float(exact), rel=1e-14)
    assert build_cutoff(3.0).plateau_value == pytest.approx(9 * 41 / 18)


def test_default_cutoff_validates():
    report = validate_cutoff(build_cutoff(1.0))
    assert report.passed, report.violations
    assert bool(report)


class _Bumped(Chi1):
    """χ₁ with an extra bump that pushes χ₁'' above 2."""

    def __call__(self, s, k=0):
        s = np.asarray(s, dtype=float)
        bump = 0.3 * np.sin(np.pi * np.clip(s - 1.0, 0.0, 1.0)) ** 6
        out = super().__call__(s, k)
        if k == 2:
            return out + 40 * bump
        return out


def test_validation_reports_second_derivative_violation():
    report = validate_cutoff(build_cutoff(1.0).__class__(1.0, _Bumped()))
    assert not report.passed
    assert "χ₁″ ≤ 2 violated" in report.violations
    assert report.worst_violation > 0


def test_validation_rejects_tiny_sample():
    with pytest.raises(ValueError):
        validate_cutoff(build_cutoff(1.0), samples=10)


@given(st.floats(0.0, 3.0))
def test_profile_constraints_pointwise(s):
    c = Chi1()
    assert c(s, 1) <= 2 * s + 1e-12
    assert c(s, 2) <= 2 + 1e-12
    assert c(s, 0) >= 0


def test_derivatives_consistent_with_finite_differences():
    c = Chi1()
    s = np.linspace(1.05, 1.95, 50)
    h = 1e-5
    for k in range(4):
        fd = (c(s + h, k) - c(s - h, k)) / (2 * h)
        np.testing.assert_allclose(fd, c(s, k + 1), atol=1e-6)


def test_scaled_derivatives():
    p = build_cutoff(2.5)
    r = np.array([0.5, 3.0, 6.0])
    chi, d1, d2, _, _ = radial_derivatives(p, r)
    np.testing.assert_allclose(chi[0], 0.25)
    np.testing.assert_allclose(d1[0], 1.0)
    assert d2[2] == 0 and d1[2] == 0


@pytest.mark.parametrize("d", [4, 5, 6])
def test_laplacian_weights_exact_outside_blend(d):
    p = build_cutoff(2.0)
    r = np.array([0.0, 0.3, 1.9, 4.0, 7.0])
    _, _, lap, bilap = chi_derivatives(p, r, d)
    np.testing.assert_array_equal(lap, [2 * d, 2 * d, 2 * d, 0.0, 0.0])
    np.testing.assert_array_equal(bilap, 0.0)


def test_bilaplacian_against_radial_laplacian_of_laplacian():
    d, p = 5, build_cutoff(1.0)
    r = np.linspace(1.1, 1.9, 30)
    h = 1e-4

    def lap(x):
        return chi_derivatives(p, x, d)[2]

    second = (lap(r + h) - 2 * lap(r) + lap(r - h)) / h**2
    first = (lap(r + h) - lap(r - h)) / (2 * h)
    np.testing.assert_allclose(second + (d - 1) * first / r, chi_derivatives(p, r, d)[3], rtol=1e-5, atol=1e-5)


def test_bound_constants_frozen():
    b = bound_constants(build_cutoff(1.0), 5)
    assert b["bilap"] == pytest.approx(230.42, rel=1e-3)
    assert b["r3_weight"] == pytest.approx(13.45, rel=1e-3)
    assert b["slope"] == pytest.approx(2.328, rel=1e-3)


def test_invalid_radius():
    with pytest.raises(ValueError):
        build_cutoff(0.0)
