import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from quadnls import make_grid
from quadnls.functionals import (
    StatePair,
    action,
    energy,
    functional_record,
    gn_ratio,
    interaction,
    kinetic,
    mass,
    pohozaev,
    radial_sobolev_ratio,
    reduce_parameters,
)
from quadnls.radial import sphere_area
from quadnls.states import random_state

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([4, 5, 6]), seeds)
def test_pohozaev_relation(d, seed):
    g = make_grid(d, 16.0, 512)
    s = random_state(g, 1.0, np.random.default_rng(seed))
    rec = functional_record(s)
    E, L, K = rec.energy, rec.kinetic, rec.pohozaev
    assert abs(8 * K - (2 * d * E - 2 * (d - 4) * L)) <= 1e-12 * (abs(E) + L)
    assert rec.energy == pytest.approx(rec.kinetic + rec.interaction, rel=1e-15)


@settings(max_examples=20, deadline=None)
@given(seeds, st.floats(0, 2 * math.pi))
def test_phase_rotation_invariance(seed, theta):
    g = make_grid(5, 16.0, 256)
    s = random_state(g, 0.7, np.random.default_rng(seed))
    r = s.phase_rotated(theta)
    assert mass(r) == pytest.approx(mass(s), rel=1e-12)
    assert energy(r) == pytest.approx(energy(s), rel=1e-10, abs=1e-10 * kinetic(s))


def test_amplitude_scaling_of_functionals(rng):
    g = make_grid(5, 16.0, 256)
    s = random_state(g, 1.0, rng)
    lam = 1.3
    t = s.scaled(lam)
    assert mass(t) == pytest.approx(lam**2 * mass(s))
    assert kinetic(t) == pytest.approx(lam**2 * kinetic(s))
    assert interaction(t) == pytest.approx(lam**3 * interaction(s))


def test_action_and_dimension_checks(rng):
    g = make_grid(5, 16.0, 256)
    s = random_state(g, 1.0, rng)
    assert action(s, 2.0) == pytest.approx(0.5 * energy(s) + mass(s))
    with pytest.raises(ValueError):
        action(s, 0.0)
    with pytest.raises(ValueError):
        pohozaev(s, d=4)
    with pytest.raises(ValueError):
        gn_ratio(s, 1.0)


def test_state_pair_validation():
    g = make_grid(4, 4.0, 64)
    with pytest.raises(ValueError):
        StatePair(g, np.zeros(64), np.zeros(64), -1.0)
    with pytest.raises(ValueError):
        StatePair(g, np.zeros(63), np.zeros(64), 1.0)
    s = StatePair(g, np.ones(64), np.ones(64), 1.0)
    with pytest.raises(ValueError):
        s.u[0] = 2.0


@pytest.mark.parametrize("d", [4, 5, 6])
def test_radial_sobolev_bound(d, rng):
    """sup r^{(d-2)/2}|f| ≤ ‖∇f‖ / sqrt(σ (d-2))."""
    g = make_grid(d, 16.0, 1024)
    C = 1 / math.sqrt(sphere_area(d) * (d - 2))
    for _ in range(30):
        s = random_state(g, 1.0, rng)
        assert radial_sobolev_ratio(s.field("u")) <= C * (1 + 1e-3)


@pytest.mark.parametrize("m, M, mu, c", [(0.5, 0.5, 1.0, 1.0), (0.7, 1.9, 0.3 + 0.4j, 0.5), (2.0, 0.25, -1.5j, 3.0)])
def test_reduction_by_symbolic_substitution(m, M, mu, c):
    """Residuals of the normalized system vanish identically after substitution.

    With U = a u(t, s y), V = b v(t, s y): U_t = a u_t, ΔU = a s² Δu, and
    i u_t, i v_t are eliminated with the general equations.
    """
    lam = c * np.conj(mu)
    p = reduce_parameters(m, M, lam, mu, c)
    u, ubar, v, lap_u, lap_v = sp.symbols("u ubar v lap_u lap_v")
    a, b, s2, k = sp.nsimplify(p.amp_u), sp.nsimplify(p.amp_v), sp.nsimplify(p.space_scale**2), sp.nsimplify(p.kappa)
    i_ut = -lap_u / (2 * sp.nsimplify(m)) + sp.nsimplify(lam) * ubar * v
    i_vt = -lap_v / (2 * sp.nsimplify(M)) + sp.nsimplify(mu) * u**2
    res_u = a * i_ut + a * s2 * lap_u - (b * v) * (a * ubar)
    res_v = b * i_vt + k * b * s2 * lap_v - (a * u) ** 2
    for res in (res_u, res_v):
        coeffs = sp.Poly(sp.expand(res), u, ubar, v, lap_u, lap_v).coeffs()
        assert all(abs(complex(co)) < 1e-12 for co in coeffs)


def test_reduction_rejects_nonconservative_coefficients():
    with pytest.raises(ValueError):
        reduce_parameters(0.5, 0.5, 1.0 + 0.1j, 1.0, 1.0)
    with pytest.raises(ValueError):
        reduce_parameters(-0.5, 0.5, 1.0, 1.0, 1.0)
