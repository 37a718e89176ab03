import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from quadnls import make_grid
from quadnls.cutoff import build_cutoff
from quadnls.evolve import EvolveConfig, Trajectory, evolve
from quadnls.functionals import StatePair, kinetic, mass
from quadnls.groundstate import solve_ground_state
from quadnls.radial import sphere_area
from quadnls.states import compact_state, gaussian_pair, random_state
from quadnls.virial import (
    FitRefused,
    VirialEvaluator,
    analytic_constants,
    calibrate_constants,
    coercivity_track,
    estimate_check,
    growth_fit,
    identity_residual,
    remainders,
    virial_I,
    virial_J,
    virial_V,
)

r_sym = sp.Symbol("r", positive=True)


def _radial_integral(expr, d):
    return float(sp.pi ** sp.Rational(d, 2) * 2 / sp.gamma(sp.Rational(d, 2)) * sp.integrate(expr * r_sym ** (d - 1), (r_sym, 0, sp.oo)))


def test_zero_state():
    g = make_grid(5, 16.0, 256)
    z = StatePair.zeros(g, 1.0)
    p = build_cutoff(4.0)
    assert virial_V(z, p) == virial_J(z, p) == virial_I(z, p) == 0.0
    assert remainders(z, p)[:3] == (0.0, 0.0, 0.0)


def test_V_inside_and_outside_the_cutoff(rng):
    g = make_grid(5, 32.0, 2048)
    p = build_cutoff(8.0)
    s = compact_state(g, 0.7, 7.0, rng)
    dens = np.abs(s.u) ** 2 + np.abs(s.v) ** 2 / (2 * 0.7)
    assert virial_V(s, p) == pytest.approx(np.dot(g.weights, g.nodes**2 * dens), rel=1e-13)
    shell = (g.nodes >= 17.0) & (g.nodes <= 30.0)
    far = s.replace(np.where(shell, 1.0 + 0.5j, 0.0), np.where(shell, 2.0, 0.0))
    dens = np.abs(far.u) ** 2 + np.abs(far.v) ** 2 / (2 * 0.7)
    assert virial_V(far, p) == pytest.approx(p.plateau_value * np.dot(g.weights, dens), rel=1e-13)


def test_J_vanishes_for_real_states(gs5_512):
    assert virial_J(gs5_512.pair, build_cutoff(3.0)) == 0.0
    assert virial_I(gs5_512.pair, build_cutoff(3.0)) == 0.0


def test_J_of_chirped_gaussian_matches_radial_integral():
    beta, d = 0.3, 5
    # Im(ū u_r) = 2βr e^{-2r²} and χ' = 2r inside R
    exact = 2 * _radial_integral(2 * r_sym * 2 * beta * r_sym * sp.exp(-2 * r_sym**2), d)
    errs = []
    for n in (2048, 4096):
        g = make_grid(d, 16.0, n)
        r = g.nodes
        s = StatePair(g, np.exp(-(r**2) + 1j * beta * r**2), np.zeros(g.n), 1.0)
        errs.append(abs(virial_J(s, build_cutoff(6.0)) - exact))
    assert errs[1] < 1e-4 * exact
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)


def test_I_of_phase_shifted_pair_matches_radial_integral():
    d = 5
    g = make_grid(d, 16.0, 4096)
    r = g.nodes
    s = StatePair(g, np.exp(-(r**2)), 1j * np.exp(-(r**2)), 1.0)
    exact = _radial_integral(r_sym**2 * sp.exp(-3 * r_sym**2), d)
    assert virial_I(s, build_cutoff(6.0)) == pytest.approx(exact, rel=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([4, 5, 6]))
def test_I_vanishes_identically_when_kappa_is_half(seed, d):
    g = make_grid(d, 16.0, 256)
    s = random_state(g, 0.5, np.random.default_rng(seed))
    assert virial_I(s, build_cutoff(3.0)) == 0.0


@pytest.mark.parametrize("kappa", [0.3, 1.0, 2.0])
def test_J_bound_with_analytic_constant(kappa, rng):
    g = make_grid(5, 16.0, 1024)
    p = build_cutoff(3.0)
    C = analytic_constants(p, 5, kappa)["C_J"]
    for _ in range(50):
        s = random_state(g, kappa, rng)
        assert abs(virial_J(s, p)) <= C * p.R * math.sqrt(mass(s) * kinetic(s))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([4, 5, 6]), st.floats(1.0, 6.0))
def test_R1_nonpositive(seed, d, R):
    g = make_grid(d, 16.0, 512)
    s = random_state(g, 1.0, np.random.default_rng(seed))
    assert remainders(s, build_cutoff(R))[0] <= 0.0


def test_remainders_vanish_inside_cutoff(rng):
    g = make_grid(5, 16.0, 1024)
    p = build_cutoff(4.0)
    for _ in range(10):
        s = compact_state(g, 1.0, 3.9, rng)
        R1, R2, R3, _ = remainders(s, p)
        assert (R1, R2, R3) == (0.0, 0.0, 0.0)


def test_R2_decays_at_least_like_inverse_square():
    g = make_grid(5, 80.0, 4096)
    r = g.nodes
    s = StatePair(g, (1 + r**2) ** -3, -((1 + r**2) ** -3), 1.0)
    vals = [abs(remainders(s, build_cutoff(R))[1]) for R in (8.0, 16.0, 32.0)]
    assert vals[1] <= vals[0] / 4 and vals[2] <= vals[1] / 4


def test_remainder_bounds_hold(rng):
    g = make_grid(5, 16.0, 1024)
    p = build_cutoff(3.0)
    for _ in range(30):
        s = random_state(g, 1.0, rng)
        _, R2, R3, bounds = remainders(s, p)
        assert abs(R2) <= bounds["R2"] and abs(R3) <= bounds["R3"]


def test_empirical_constants_below_analytic():
    g = make_grid(5, 16.0, 512)
    p = build_cutoff(3.0)
    emp = calibrate_constants(g, 1.0, 3.0, n_states=100, seed=1)
    ana = analytic_constants(p, 5, 1.0)
    for k in ("C_J", "C_R2", "C_R3"):
        assert 0 < emp[k] <= ana[k]
    assert calibrate_constants(g, 1.0, 3.0, n_states=100, seed=1) == emp


def test_evaluator_rejects_foreign_state():
    ev = VirialEvaluator(make_grid(5, 16.0, 256), build_cutoff(3.0), 1.0)
    with pytest.raises(ValueError):
        ev.V(StatePair.zeros(make_grid(5, 16.0, 512), 1.0))
    with pytest.raises(ValueError):
        ev.V(StatePair.zeros(make_grid(5, 16.0, 256), 2.0))


def _smooth_run(kappa=1.0, n=1024, t_end=0.3, dt=2e-3):
    g = make_grid(5, 16.0, n)
    s = gaussian_pair(g, kappa, amplitudes=(1.5, -1.0 + 0.5j), widths=(1.5, 2.0), phases=(0.3, 0.0), chirps=(0.2, -0.1))
    p = build_cutoff(2.0)
    return evolve(s, EvolveConfig(dt0=dt, t_end=t_end, adaptive=False), cutoff=p), p


def test_identity_residual_small_on_smooth_run():
    tr, p = _smooth_run()
    ser = identity_residual(tr, p)
    assert len(ser) == tr.steps - 1
    scale = np.max(np.abs(8 * ser.columns["K"]))
    assert ser.max_residual_J < 1e-2 * scale
    assert ser.max_residual_V < 1e-2 * np.max(np.abs(ser.columns["J"]))
    rec = ser.records()[0]
    assert set(rec.as_dict()) == {"t", "V", "J", "I", "K", "R1", "R2", "R3", "residual_V", "residual_J"}


def test_identity_residual_kappa_half_unchanged_without_I():
    tr, p = _smooth_run(kappa=0.5, t_end=0.1)
    a, b = identity_residual(tr, p), identity_residual(tr, p, include_I=False)
    np.testing.assert_array_equal(a.columns["residual_V"], b.columns["residual_V"])
    np.testing.assert_array_equal(a.columns["residual_J"], b.columns["residual_J"])


def test_identity_residual_errors(gs5_512):
    tr = evolve(gs5_512.pair, EvolveConfig(dt0=1e-3, t_end=0.01))
    with pytest.raises(ValueError):
        identity_residual(tr, build_cutoff(3.0))
    tr, p = _smooth_run(t_end=0.002, dt=2e-3)
    with pytest.raises(ValueError):
        identity_residual(tr, p)
    tr, p = _smooth_run(t_end=0.01)
    with pytest.raises(ValueError):
        identity_residual(tr, build_cutoff(3.0))


def test_standing_wave_virial_quantities(gs5_512):
    """J, I and K stay at the level of the time-stepping defect, which
    shrinks like dt²."""
    p = build_cutoff(3.0)
    sizes = []
    for dt in (1e-3, 5e-4):
        tr = evolve(gs5_512.pair, EvolveConfig(dt0=dt, t_end=0.05, adaptive=False), cutoff=p)
        ser = identity_residual(tr, p)
        M, L = tr.column("M")[0], tr.column("L")[0]
        scale = p.R * math.sqrt(M * L)
        sizes.append(np.max(np.abs(ser.columns["J"])) / scale)
        assert sizes[-1] < 1e-5
        assert np.max(np.abs(ser.columns["I"])) < 1e-5 * scale
        assert np.max(np.abs(ser.columns["K"])) < 1e-3 * L
    assert sizes[0] / sizes[1] == pytest.approx(4, rel=0.1)
    report = coercivity_track(tr, {"EM": gs5_512.threshold_EM})
    assert not report.coercive and report.message == "not coercive, on the manifold K=0"
    assert not report.satisfied_at_t0 and not report.violation
    with pytest.raises(FitRefused):
        growth_fit(tr, p, report)


def test_standing_wave_identity_residual_is_a_spatial_floor(gs5_512):
    p = build_cutoff(3.0)
    floors = []
    for g in (gs5_512, solve_ground_state(5, 1.0, 1.0, make_grid(5, 12.0, 1024))):
        tr = evolve(g.pair, EvolveConfig(dt0=2.5e-4, t_end=0.005, adaptive=False), cutoff=p)
        floors.append(identity_residual(tr, p).max_residual_J / tr.column("L")[0])
    assert floors[0] < 1e-2
    assert floors[0] / floors[1] == pytest.approx(4, rel=0.1)


def test_estimate_holds_on_coercive_run(gs5_512):
    p = build_cutoff(3.0)
    s0 = gs5_512.pair.scaled(1.05)
    tr = evolve(s0, EvolveConfig(dt0=1e-3, t_end=0.05), cutoff=p)
    report = coercivity_track(tr, {"EM": gs5_512.threshold_EM})
    assert report.coercive and report.satisfied_at_t0 and report.delta_hat > 0
    constants = calibrate_constants(gs5_512.grid, 1.0, 3.0)
    assert estimate_check(tr, p, constants)["holds"]


def _fake_trajectory(L, K, J, d=5, termination="blowup_detected"):
    g = make_grid(d, 8.0, 64)
    n = len(L)
    D = {"t": np.linspace(0, 1, n), "L": L, "K": K, "J": J, "M": np.ones(n), "E": np.zeros(n)}
    for k in ("R1", "R2", "R3", "V", "I"):
        D[k] = np.zeros(n)
    return Trajectory(g, 1.0, EvolveConfig(), D, termination=termination, cutoff_R=1.0)


def test_growth_fit_on_injected_quadratic_growth():
    t = np.linspace(0, 1, 200)
    tr = _fake_trajectory(3 * t**2, -np.ones_like(t), -4 * t)
    fit = growth_fit(tr, build_cutoff(1.0))
    assert fit.c_fit == pytest.approx(3.0)
    assert fit.J_check_passed and fit.delta_hat == 1.0
    assert math.isfinite(fit.riccati_bound) and fit.riccati_bound > fit.T1
    assert fit.bound_respected


def test_growth_fit_refusals():
    t = np.linspace(0, 1, 200)
    with pytest.raises(FitRefused):
        growth_fit(_fake_trajectory(3 * t**2, -np.ones_like(t), -4 * t, d=4), build_cutoff(1.0))
    with pytest.raises(FitRefused):
        growth_fit(_fake_trajectory(3 * t**2, np.ones_like(t), -4 * t), build_cutoff(1.0))
    with pytest.raises(FitRefused):
        growth_fit(_fake_trajectory(3 * t[:5] ** 2, -np.ones(5), -4 * t[:5]), build_cutoff(1.0))
