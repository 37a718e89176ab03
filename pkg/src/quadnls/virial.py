"""Localized virial quantities and the blow-up mechanics built on them.

With the cutoff weight χ and the radial state (u, v):

    V = ∫ χ (|u|² + |v|²/(2κ))
    J = 2 ∫ χ' Im[ū u_r + ½ v̄ v_r]
    I = (2 - 1/κ) ∫ χ Im[v ū²]
    V' = J + I,      J' = 8K + R1 + R2 + R3

    R1 = 4 ∫ (χ₁''(r/R) - 2) (|u_r|² + κ/2 |v_r|²)     (≤ 0)
    R2 = -∫ ΔΔχ (|u|² + κ/2 |v|²)
    R3 = ∫ (Δχ - 2d) Re[v ū²]

All three remainders vanish for states supported in |x| ≤ R, where χ = |x|².
R1 is assembled from face differences, so its sign holds exactly on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, field
from functools import lru_cache
import math

import numpy as np

from quadnls.cutoff import CutoffProfile, bound_constants, build_cutoff, chi_derivatives
from quadnls.functionals import StatePair, kinetic, mass
from quadnls.radial import RadialGrid, central_derivative, gradient_norm_sq, sphere_area

__all__ = [
    "VirialEvaluator",
    "VirialRecord",
    "VirialSeries",
    "CoercivityReport",
    "GrowthFit",
    "FitRefused",
    "virial_V",
    "virial_J",
    "virial_I",
    "remainders",
    "analytic_constants",
    "calibrate_constants",
    "identity_residual",
    "estimate_check",
    "coercivity_track",
    "growth_fit",
]


class FitRefused(ValueError):
    """The trajectory does not meet the hypotheses of the growth fit."""


class VirialEvaluator:
    """Cutoff weights sampled once on a grid, applied to many states."""

    def __init__(self, grid: RadialGrid, cutoff: CutoffProfile, kappa: float):
        self.grid, self.cutoff, self.kappa = grid, cutoff, float(kappa)
        r = grid.nodes
        self.chi, self.dchi, lap, bilap = chi_derivatives(cutoff, r, grid.d)
        self.lap_weight = lap - 2 * grid.d
        self.bilap = bilap
        rho = grid.faces[1:-1]
        self.face_weight = cutoff.chi1(rho / cutoff.R, 2) - 2.0
        self.wall_weight = float(cutoff.chi1(grid.r_max / cutoff.R, 2)) - 2.0
        self.i_coef = 2.0 - 1.0 / self.kappa

    def _check(self, s: StatePair):
        if not s.grid.same_as(self.grid):
            raise ValueError(f"state lives on {s.grid}, evaluator on {self.grid}")
        if s.kappa != self.kappa:
            raise ValueError(f"state has kappa={s.kappa}, evaluator kappa={self.kappa}")

    def V(self, s: StatePair) -> float:
        self._check(s)
        dens = np.abs(s.u) ** 2 + np.abs(s.v) ** 2 / (2 * self.kappa)
        return float(np.dot(self.grid.weights, self.chi * dens))

    def J(self, s: StatePair) -> float:
        self._check(s)
        g = self.grid
        du, dv = central_derivative(g, s.u), central_derivative(g, s.v)
        dens = np.imag(np.conj(s.u) * du + 0.5 * np.conj(s.v) * dv)
        return float(2.0 * np.dot(g.weights, self.dchi * dens))

    def I(self, s: StatePair) -> float:
        self._check(s)
        if self.i_coef == 0.0:
            return 0.0
        dens = np.imag(s.v * np.conj(s.u) ** 2)
        return float(self.i_coef * np.dot(self.grid.weights, self.chi * dens))

    def remainders(self, s: StatePair) -> tuple[float, float, float]:
        self._check(s)
        g, k = self.grid, self.kappa
        c = g.face_coeffs[1:-1]
        grad = np.abs(np.diff(s.u)) ** 2 + 0.5 * k * np.abs(np.diff(s.v)) ** 2
        wall = 2.0 * g.face_coeffs[-1] * (abs(s.u[-1]) ** 2 + 0.5 * k * abs(s.v[-1]) ** 2)
        R1 = 4.0 * float(np.dot(c * self.face_weight, grad) + self.wall_weight * wall)
        R2 = -float(np.dot(g.weights, self.bilap * (np.abs(s.u) ** 2 + 0.5 * k * np.abs(s.v) ** 2)))
        R3 = float(np.dot(g.weights, self.lap_weight * np.real(s.v * np.conj(s.u) ** 2)))
        return R1, R2, R3

    def evaluate(self, s: StatePair) -> dict:
        R1, R2, R3 = self.remainders(s)
        return {"V": self.V(s), "J": self.J(s), "I": self.I(s), "R1": R1, "R2": R2, "R3": R3}


def virial_V(s: StatePair, p: CutoffProfile) -> float:
    return VirialEvaluator(s.grid, p, s.kappa).V(s)


def virial_J(s: StatePair, p: CutoffProfile) -> float:
    return VirialEvaluator(s.grid, p, s.kappa).J(s)


def virial_I(s: StatePair, p: CutoffProfile) -> float:
    return VirialEvaluator(s.grid, p, s.kappa).I(s)


# ---------------------------------------------------------------------------
# constants


def analytic_constants(p: CutoffProfile, d: int, kappa: float) -> dict:
    """Explicit constants for the J, R2 and R3 estimates.

    |J|  ≤ C_J R M^{1/2} L^{1/2}
    |R2| ≤ C_R2 M / R²
    |R3| ≤ C_R3 R^{-(d-2)/2} M ‖∇u‖
    """
    b = bound_constants(p, d)
    sobolev = 1.0 / math.sqrt(sphere_area(d) * (d - 2)) if d > 2 else math.inf
    return {
        "C_J": 2.0 * b["slope"] * math.sqrt(max(1.0, 1.0 / (2 * kappa))),
        "C_R2": b["bilap"] * max(1.0, kappa / 2),
        "C_R3": 0.5 * b["r3_weight"] * sobolev,
        "C_sobolev": sobolev,
        "source": "analytic",
    }


@lru_cache(maxsize=32)
def _calibrate(d, r_max, n, kappa, R, n_states, seed):
    from quadnls.states import random_state

    grid = RadialGrid(d, r_max, n)
    p = build_cutoff(R)
    ev = VirialEvaluator(grid, p, kappa)
    rng = np.random.default_rng(seed)
    c_j = c_r2 = c_r3 = 0.0
    for _ in range(n_states):
        s = random_state(grid, kappa, rng, max_radius=min(r_max / 2, 3 * R))
        M, L = mass(s), kinetic(s)
        _, R2, R3 = ev.remainders(s)
        grad_u = math.sqrt(gradient_norm_sq(grid, s.u))
        c_j = max(c_j, abs(ev.J(s)) / (R * math.sqrt(M * L)))
        c_r2 = max(c_r2, abs(R2) * R**2 / M)
        if grad_u > 0:
            c_r3 = max(c_r3, abs(R3) * R ** (0.5 * (d - 2)) / (M * grad_u))
    return c_j, c_r2, c_r3


def calibrate_constants(grid: RadialGrid, kappa: float, R: float, n_states: int = 100, seed: int = 0) -> dict:
    """Largest observed ratios over a family of random smooth radial states.

    The result is cached per (grid, κ, R) so a run calibrates at most once.
    """
    c_j, c_r2, c_r3 = _calibrate(grid.d, grid.r_max, grid.n, float(kappa), float(R), n_states, seed)
    return {"C_J": c_j, "C_R2": c_r2, "C_R3": c_r3, "n_states": n_states, "seed": seed, "source": "empirical"}


def remainders(s: StatePair, p: CutoffProfile, constants: dict | None = None):
    """(R1, R2, R3, bounds), the bounds being the surrogates for |R2| and |R3|."""
    ev = VirialEvaluator(s.grid, p, s.kappa)
    R1, R2, R3 = ev.remainders(s)
    c = constants or analytic_constants(p, s.d, s.kappa)
    M = mass(s)
    grad_u = math.sqrt(gradient_norm_sq(s.grid, s.u))
    bounds = {
        "R2": c["C_R2"] * M / p.R**2,
        "R3": c["C_R3"] * p.R ** (-0.5 * (s.d - 2)) * M * grad_u,
    }
    return R1, R2, R3, bounds


# ---------------------------------------------------------------------------
# identity along trajectories


@dataclass(frozen=True)
class VirialRecord:
    t: float
    V: float
    J: float
    I: float
    K: float
    R1: float
    R2: float
    R3: float
    residual_V: float
    residual_J: float

    def as_dict(self) -> dict:
        return asdict(self)


RECORD_COLUMNS = ("t", "V", "J", "I", "K", "R1", "R2", "R3", "residual_V", "residual_J")


@dataclass
class VirialSeries:
    """Virial quantities at the interior recorded times, where centred differences exist."""

    columns: dict[str, np.ndarray]
    include_I: bool = True

    def __len__(self):
        return len(self.columns["t"])

    def records(self) -> list[VirialRecord]:
        return [VirialRecord(*(float(self.columns[k][i]) for k in RECORD_COLUMNS)) for i in range(len(self))]

    @property
    def max_residual_V(self) -> float:
        return float(np.max(np.abs(self.columns["residual_V"])))

    @property
    def max_residual_J(self) -> float:
        return float(np.max(np.abs(self.columns["residual_J"])))


def _require_virial(tr, p: CutoffProfile):
    if "J" not in tr.diagnostics:
        raise ValueError("trajectory has no virial columns; evolve it with a cutoff")
    if tr.cutoff_R is not None and not math.isclose(tr.cutoff_R, p.R):
        raise ValueError(f"trajectory recorded with R={tr.cutoff_R}, asked for R={p.R}")


def identity_residual(tr, p: CutoffProfile, include_I: bool = True) -> VirialSeries:
    """residual_V = dV/dt - (J + I) and residual_J = dJ/dt - (8K + R1 + R2 + R3).

    Time derivatives are second-order centred differences (non-uniform steps
    allowed), evaluated at every interior recorded time.
    """
    _require_virial(tr, p)
    D = tr.diagnostics
    t = D["t"]
    if len(t) < 3:
        raise ValueError("need at least three recorded times for centred differences")
    dV = np.gradient(D["V"], t)[1:-1]
    dJ = np.gradient(D["J"], t)[1:-1]
    inner = slice(1, -1)
    I = D["I"][inner] if include_I else np.zeros(len(t) - 2)
    cols = {k: D[k][inner] for k in ("t", "V", "J", "I", "K", "R1", "R2", "R3")}
    cols["residual_V"] = dV - (cols["J"] + I)
    cols["residual_J"] = dJ - (8 * cols["K"] + cols["R1"] + cols["R2"] + cols["R3"])
    return VirialSeries(cols, include_I)


def estimate_check(tr, p: CutoffProfile, constants: dict) -> dict:
    """Check J' ≤ 8K + C_R2 M/R² + C_R3 R^{-(d-2)/2} M ‖∇u‖ at each interior step."""
    _require_virial(tr, p)
    D = tr.diagnostics
    d = tr.grid.d
    t = D["t"]
    dJ = np.gradient(D["J"], t)[1:-1]
    inner = slice(1, -1)
    M = D["M"][inner]
    rhs = (
        8 * D["K"][inner]
        + constants["C_R2"] * M / p.R**2
        + constants["C_R3"] * p.R ** (-0.5 * (d - 2)) * M * np.sqrt(D["grad_u"][inner])
    )
    scale = np.abs(8 * D["K"][inner]) + np.abs(rhs - 8 * D["K"][inner]) + 1e-300
    excess = (dJ - rhs) / scale
    return {"holds": bool(np.all(excess <= 1e-6)), "max_relative_excess": float(np.max(excess)), "steps": int(len(excess))}


# ---------------------------------------------------------------------------
# coercivity and growth


@dataclass
class CoercivityReport:
    delta_hat: float
    condition_checked: str
    satisfied_at_t0: bool
    coercive: bool
    violation: bool
    message: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _condition(d: int) -> str:
    return {4: "negE", 5: "A5", 6: "A6"}.get(d, "negE")


def coercivity_track(tr, thresholds: dict | None = None, rel_tol: float = 1e-6) -> CoercivityReport:
    """Track K(t) < 0 along a run; delta_hat = inf(-K) is an empirical lower estimate.

    K(t) counts as negative only below ``-rel_tol · L(t)``, so a run sitting
    on the manifold K = 0 up to discretization error is reported as such.
    """
    D = tr.diagnostics
    d = tr.grid.d
    K, L, E, M = D["K"], D["L"], D["E"], D["M"]
    cond = _condition(d)
    thresholds = thresholds or {}
    K0_negative = bool(K[0] < -rel_tol * L[0])
    if cond == "A5":
        below = "EM" in thresholds and E[0] * M[0] < thresholds["EM"]
        satisfied = K0_negative and below
    elif cond == "A6":
        below = "E_threshold" in thresholds and E[0] < thresholds["E_threshold"]
        satisfied = K0_negative and below
    else:
        satisfied = bool(E[0] < 0)
    coercive = bool(np.all(K < -rel_tol * L))
    delta_hat = float(np.min(-K))
    if coercive:
        message = f"coercive: K(t) < -{delta_hat:.6g} on the recorded window (empirical)"
    elif np.max(np.abs(K) / np.maximum(L, 1e-300)) <= 1e3 * rel_tol:
        message = "not coercive, on the manifold K=0"
    else:
        message = f"not coercive: max K/L = {np.max(K / np.maximum(L, 1e-300)):.3e}"
    violation = satisfied and not coercive
    if violation:
        message += f"; {cond} held at t=0, so this signals a scheme or threshold error"
    return CoercivityReport(
        delta_hat=max(delta_hat, 0.0) if coercive else 0.0,
        condition_checked=cond,
        satisfied_at_t0=bool(satisfied),
        coercive=coercive,
        violation=bool(violation),
        message=message,
    )


@dataclass
class GrowthFit:
    c_fit: float
    c_lower: float
    delta_hat: float
    J_margin: float
    J_check_passed: bool
    T1: float
    riccati_A: float
    riccati_T2: float
    riccati_bound: float
    witness_fraction: float
    C_J: float
    observed_blowup_time: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def bound_respected(self) -> bool | None:
        if self.observed_blowup_time is None:
            return None
        return self.observed_blowup_time <= self.riccati_bound

    def as_dict(self) -> dict:
        out = asdict(self)
        out["bound_respected"] = self.bound_respected
        return out


def growth_fit(tr, p: CutoffProfile, report: CoercivityReport | None = None, min_points: int = 8) -> GrowthFit:
    """Fit the growth mechanics of a K-coercive run in d = 5 or 6.

    (i) L(t) ≈ c t²; (ii) J(t) ≤ J(0) - 2δ̂ t pointwise; (iii) the Riccati
    argument: past T₁ one has J ≤ -(d-4)/2 ξ with ξ(t) = ∫_{T₁}^t L, hence
    A ξ² ≤ ξ' and blow-up happens before T₂ + 1/(A ξ(T₂)) for every T₂ > T₁.
    The bound reported is the minimum over recorded T₂.
    """
    d = tr.grid.d
    if d not in (5, 6):
        raise FitRefused(f"growth fit needs d in (5, 6), got d={d}")
    _require_virial(tr, p)
    report = report or coercivity_track(tr)
    if not report.coercive:
        raise FitRefused(f"fit refused: {report.message}")
    D = tr.diagnostics
    t, L, J, M = D["t"], D["L"], D["J"], D["M"]
    if len(t) < min_points:
        raise FitRefused(f"window too short: {len(t)} recorded times")
    delta = report.delta_hat

    pos = t > 0
    c_fit = float(np.dot(L[pos], t[pos] ** 2) / np.dot(t[pos] ** 2, t[pos] ** 2))
    c_lower = float(np.min(L[pos] / t[pos] ** 2))
    J_margin = float(np.max(J - (J[0] - 2 * delta * t)))
    J_ok = J_margin <= 1e-9 * max(1.0, float(np.max(np.abs(J))))

    dJ = 8 * D["K"] + D["R1"] + D["R2"] + D["R3"]
    good = (J < -delta * t) & (dJ <= -0.5 * (d - 4) * L) & pos
    # first index from which both conditions hold for the rest of the run
    bad = np.nonzero(~good)[0]
    i1 = 0 if bad.size == 0 else int(bad[-1]) + 1
    if len(t) - i1 < min_points:
        raise FitRefused("window too short: the Riccati conditions hold on too few recorded times")
    T1 = float(t[i1])

    consts = analytic_constants(p, d, tr.kappa)
    C_J = consts["C_J"]
    A = (d - 4) ** 2 / (4 * C_J**2 * p.R**2 * M[0])
    ts, Ls = t[i1:], L[i1:]
    xi = np.concatenate(([0.0], np.cumsum(0.5 * (Ls[1:] + Ls[:-1]) * np.diff(ts))))
    witness = A * xi[1:] ** 2 <= Ls[1:] * (1 + 1e-9)
    bounds = ts[1:] + 1.0 / (A * xi[1:])
    k = int(np.argmin(bounds))
    notes = []
    if tr.termination != "blowup_detected":
        notes.append("run did not reach the blow-up detector")
    return GrowthFit(
        c_fit=c_fit,
        c_lower=c_lower,
        delta_hat=delta,
        J_margin=J_margin,
        J_check_passed=bool(J_ok),
        T1=T1,
        riccati_A=float(A),
        riccati_T2=float(ts[1:][k]),
        riccati_bound=float(bounds[k]),
        witness_fraction=float(np.mean(witness)),
        C_J=C_J,
        observed_blowup_time=tr.blowup_time,
        notes=notes,
    )
