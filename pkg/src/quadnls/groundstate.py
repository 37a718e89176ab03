"""Ground states of the elliptic systems

    Δφ - ω φ = φ ψ,      κ Δψ - 2ω ψ = φ²        (d = 4, 5)
    Δφ = φ ψ,            κ Δψ = φ²               (d = 6, static)

For d = 4, 5 the discretized system is solved by damped Newton with a
backtracking line search on the full 2n-dimensional real system.  The
initial guess is a Gaussian pair (φ > 0, ψ < 0, the sign forced by the
second equation), first relaxed by a few Petviashvili iterations so that
Newton starts inside its basin.  For d = 6 the Aubin-Talenti bubble gives
an explicit static pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.linalg import solveh_banded
from scipy.sparse.linalg import spsolve

from quadnls.functionals import FunctionalRecord, StatePair, action, functional_record
from quadnls.radial import RadialGrid, laplacian

log = logging.getLogger(__name__)

__all__ = [
    "GroundStateResult",
    "GroundStateError",
    "solve_ground_state",
    "explicit_static_pair",
    "talenti_bubble",
    "rescale_ground_state",
    "threshold_quantities",
    "elliptic_residual",
    "linear_instability_rate",
]


class GroundStateError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class GroundStateResult:
    pair: StatePair
    omega: float | None
    residual: float
    record: FunctionalRecord
    threshold_EM: float | None = None
    threshold_E: float | None = None
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    sign_pattern: str = ""
    candidates: list[dict] = field(default_factory=list)
    label: str = "ground state"

    @property
    def d(self) -> int:
        return self.pair.d

    @property
    def kappa(self) -> float:
        return self.pair.kappa

    @property
    def grid(self) -> RadialGrid:
        return self.pair.grid

    @property
    def pohozaev_relative(self) -> float:
        """|K| / L, zero for an exact solution."""
        return abs(self.record.pohozaev) / self.record.kinetic


def elliptic_residual(s: StatePair, omega: float, boundary=(0.0, 0.0)) -> tuple[float, np.ndarray, np.ndarray]:
    """Max-norm residual of both equations, relative to the size of their terms."""
    phi, psi = s.u.real, s.v.real
    g, k = s.grid, s.kappa
    F1 = laplacian(g, phi, boundary[0]) - omega * phi - phi * psi
    F2 = k * laplacian(g, psi, boundary[1]) - 2 * omega * psi - phi**2
    scale = max(
        np.max(np.abs(omega * phi)),
        np.max(np.abs(2 * omega * psi)),
        np.max(np.abs(phi * psi)),
        np.max(phi**2),
        1e-300,
    )
    return float(max(np.max(np.abs(F1)), np.max(np.abs(F2))) / scale), F1, F2


def _laplacian_matrix(g: RadialGrid) -> sp.csr_matrix:
    diag, off = g.stiffness_bands
    S = sp.diags([off, diag, off], [-1, 0, 1], format="csr")
    return -sp.diags(1.0 / g.weights) @ S


def _petviashvili(g, kappa, omega, phi, psi, max_iter=200, tol=1e-8):
    diag, off = g.stiffness_bands
    w = g.weights
    A1 = np.vstack([np.concatenate(([0.0], off)), diag + omega * w])
    A2 = np.vstack([np.concatenate(([0.0], kappa * off)), kappa * diag + 2 * omega * w])

    def apply(A, f):
        out = A[1] * f
        out[:-1] += A[0, 1:] * f[1:]
        out[1:] += A[0, 1:] * f[:-1]
        return out

    for _ in range(max_iter):
        N1, N2 = -w * phi * psi, -w * phi**2
        den = phi @ N1 + psi @ N2
        if not den > 0:
            break
        stab = (phi @ apply(A1, phi) + psi @ apply(A2, psi)) / den
        phi_new = stab**2 * solveh_banded(A1, N1)
        psi_new = stab**2 * solveh_banded(A2, N2)
        change = max(np.max(np.abs(phi_new - phi)), np.max(np.abs(psi_new - psi))) / np.max(np.abs(phi_new))
        phi, psi = phi_new, psi_new
        if change < tol:
            break
    return phi, psi


def _newton(g, kappa, omega, phi, psi, tol, max_iter):
    lap = _laplacian_matrix(g)
    eye = sp.identity(g.n, format="csr")
    sqrt_w = np.sqrt(g.weights)
    s = StatePair(g, phi, psi, kappa)

    def norm(F1, F2):
        return math.hypot(np.linalg.norm(sqrt_w * F1), np.linalg.norm(sqrt_w * F2))

    res, F1, F2 = elliptic_residual(s, omega)
    history = [res]
    current = norm(F1, F2)
    for it in range(max_iter):
        if res <= 0.01 * tol:
            break
        J = sp.bmat(
            [
                [lap - omega * eye - sp.diags(psi), -sp.diags(phi)],
                [-2 * sp.diags(phi), kappa * lap - 2 * omega * eye],
            ],
            format="csc",
        )
        delta = spsolve(J, -np.concatenate([F1, F2]))
        dphi, dpsi = delta[: g.n], delta[g.n :]
        alpha = 1.0
        while True:
            trial = StatePair(g, phi + alpha * dphi, psi + alpha * dpsi, kappa)
            t_res, G1, G2 = elliptic_residual(trial, omega)
            t_norm = norm(G1, G2)
            if t_norm < (1 - 1e-4 * alpha) * current or alpha < 1e-6:
                break
            alpha *= 0.5
        if t_norm >= current and res <= tol:
            break  # round-off floor reached
        phi, psi = trial.u.real, trial.v.real
        res, F1, F2, current = t_res, G1, G2, t_norm
        history.append(res)
        if len(history) > 6 and res <= tol and history[-1] > 0.5 * history[-4]:
            break
    return phi, psi, history


def linear_instability_rate(g: GroundStateResult, max_nodes: int = 2048) -> float:
    """Largest exponential growth rate of perturbations of the standing wave.

    Writing u = e^{iωt}(φ + a + ib), v = e^{2iωt}(ψ + c + id), the
    linearized flow is (a, c)' = L₋ (b, d), (b, d)' = -L₊ (a, c); growth
    rates are square roots of the positive eigenvalues of -L₋L₊.
    Dense eigenvalue problem, so keep the grid small.
    """
    if g.omega is None:
        raise ValueError("static pairs have no standing-wave linearization")
    grid, k, w = g.grid, g.kappa, g.omega
    if grid.n > max_nodes:
        raise ValueError(f"dense linearization limited to {max_nodes} nodes, grid has {grid.n}")
    lap = _laplacian_matrix(grid).toarray()
    eye = np.eye(grid.n)
    phi, psi = g.pair.u.real, g.pair.v.real
    lower = np.hstack([2 * np.diag(phi), 2 * w * eye - k * lap])
    L_plus = np.vstack([np.hstack([w * eye - lap + np.diag(psi), np.diag(phi)]), lower])
    L_minus = np.vstack([np.hstack([w * eye - lap - np.diag(psi), np.diag(phi)]), lower])
    from scipy.linalg import eigvals

    ev = eigvals(-L_minus @ L_plus)
    return float(math.sqrt(max(ev.real.max(), 0.0)))


def _sign_pattern(phi, psi, rel=1e-10) -> str:
    def sign(f):
        big = np.abs(f) > rel * np.max(np.abs(f))
        if np.all(f[big] > 0):
            return "+"
        if np.all(f[big] < 0):
            return "-"
        return "±"

    return f"phi{sign(phi)} psi{sign(psi)}"


DEFAULT_BASKET = ((1.0, 1.0), (0.5, 1.0), (2.0, 0.5))


def solve_ground_state(
    d: int,
    kappa: float,
    omega: float,
    grid: RadialGrid,
    init: StatePair | None = None,
    tol: float = 1e-9,
    max_iter: int = 60,
    basket=DEFAULT_BASKET,
    warm_start: bool = True,
) -> GroundStateResult:
    """Solve the ω-frequency elliptic system on ``grid`` (d = 4 or 5).

    Every guess of the basket (Gaussian width, |ψ|/φ amplitude ratio) is
    driven to a solution; the converged nonzero solution of least action
    S_ω is returned, with all distinct candidates listed in ``candidates``.
    """
    if d not in (4, 5) and not 1 <= d <= 5:
        raise ValueError("(SE) ground states are computed for d <= 5; use explicit_static_pair for d = 6")
    if grid.d != d:
        raise ValueError(f"grid dimension {grid.d} does not match d = {d}")
    if not (kappa > 0 and omega > 0):
        raise ValueError("kappa and omega must be positive")

    r = grid.nodes
    guesses = []
    if init is not None:
        guesses.append(("init", init.u.real.copy(), init.v.real.copy()))
    for width, ratio in basket:
        amp = 4.0 * omega
        guesses.append((f"gauss(w={width:g},B/A={ratio:g})", amp * np.exp(-(r**2) / width**2), -ratio * amp * np.exp(-(r**2) / width**2)))

    trace, solutions = [], []
    for label, phi, psi in guesses:
        for attempt in range(3):
            p0, q0 = (phi, psi) if not warm_start else _petviashvili(grid, kappa, omega, phi, psi)
            p, q, hist = _newton(grid, kappa, omega, p0, q0, tol, max_iter)
            entry = {"guess": label, "attempt": attempt, "iterations": len(hist) - 1, "residual": hist[-1]}
            trace.append(entry)
            if not np.all(np.isfinite(p)) or hist[-1] > tol:
                entry["status"] = "diverged"
                break
            if np.max(np.abs(p)) < 1e-8 * max(1.0, np.max(np.abs(phi))):
                entry["status"] = "zero solution"
                phi, psi = 4.0 * phi, 4.0 * psi
                continue
            entry["status"] = "converged"
            solutions.append((p, q, hist, label))
            break
    if not solutions:
        raise GroundStateError(f"no nonzero solution converged (d={d}, kappa={kappa}, omega={omega})", trace)

    distinct = []
    for p, q, hist, label in solutions:
        if p[0] < 0:  # (φ, ψ) and (-φ, ψ) are the same solution
            p = -p
        pair = StatePair(grid, p, q, kappa)
        S = action(pair, omega)
        if all(np.max(np.abs(p - o[0].u.real)) > 1e-6 * np.max(np.abs(p)) for o in distinct):
            distinct.append((pair, S, hist, label))
    distinct.sort(key=lambda item: item[1])
    pair, S, hist, label = distinct[0]
    record = functional_record(pair)
    result = GroundStateResult(
        pair=pair,
        omega=omega,
        residual=hist[-1],
        record=record,
        iterations=len(hist) - 1,
        residual_history=list(hist),
        sign_pattern=_sign_pattern(pair.u.real, pair.v.real),
        candidates=[
            {"action": c[1], "phi0": float(c[0].u.real[0]), "psi0": float(c[0].v.real[0]), "guess": c[3]} for c in distinct
        ],
    )
    if d == 5:
        result.threshold_EM = record.energy * record.mass
    log.info(
        "ground state d=%d kappa=%g omega=%g: residual %.2e, |K|/L %.2e, %d distinct",
        d, kappa, omega, result.residual, result.pohozaev_relative, len(distinct),
    )
    return result


def talenti_bubble(r):
    """W(x) = (1 + |x|²/24)^{-2}, which solves ΔW + W² = 0 in R^6."""
    return (1.0 + np.asarray(r) ** 2 / 24.0) ** -2


def explicit_static_pair(kappa: float, a: float, grid: RadialGrid, tol: float = 1e-6) -> GroundStateResult:
    """Static pair φ = a W(λx), ψ = -(a/√κ) W(λx) with λ² = a/√κ (d = 6).

    The residual is measured with the exact closed-form values imposed at
    r_max, so it reflects the interior discretization only.
    """
    if grid.d != 6:
        raise ValueError("the explicit static pair lives in R^6")
    if not (kappa > 0 and a > 0):
        raise ValueError("kappa and a must be positive")
    lam = math.sqrt(a / math.sqrt(kappa))
    phi = a * talenti_bubble(lam * grid.nodes)
    psi = -(a / math.sqrt(kappa)) * talenti_bubble(lam * grid.nodes)
    edge = talenti_bubble(lam * grid.r_max)
    pair = StatePair(grid, phi, psi, kappa)
    residual, _, _ = elliptic_residual(pair, 0.0, boundary=(a * edge, -(a / math.sqrt(kappa)) * edge))
    if residual > tol:
        raise GroundStateError(f"static pair residual {residual:.3e} exceeds {tol:.1e}")
    # the profile is a truncation of a whole-space solution, not a Dirichlet field
    record = functional_record(pair, wall=False)
    return GroundStateResult(
        pair=pair,
        omega=None,
        residual=residual,
        record=record,
        threshold_E=record.energy,
        sign_pattern=_sign_pattern(phi, psi),
        label="candidate ground-state energy",
    )


def rescale_ground_state(g: GroundStateResult, omega: float) -> StatePair:
    """(φ_ω, ψ_ω)(x) = (ω/ω₀) (φ, ψ)(√(ω/ω₀) x), resampled on the same grid."""
    if g.omega is None or g.d > 5:
        raise ValueError("only (SE) ground states (d <= 5) have an ω-family")
    if not omega > 0:
        raise ValueError("omega must be positive")
    grid = g.grid
    ratio = omega / g.omega
    stretch = math.sqrt(ratio)
    r = grid.nodes
    x = np.concatenate((-r[::-1], r, [grid.r_max]))
    out = []
    for f in (g.pair.u.real, g.pair.v.real):
        spline = CubicSpline(x, np.concatenate((f[::-1], f, [0.0])))
        target = stretch * r
        out.append(np.where(target < grid.r_max, ratio * spline(np.minimum(target, grid.r_max)), 0.0))
    if stretch * grid.dr > 0.05:
        warnings.warn(f"rescaled profile under-resolved: sqrt(omega)*dr = {stretch * grid.dr:.3g}", RuntimeWarning)
    tail = np.max(np.abs(g.pair.u.real[r > stretch * grid.r_max]), initial=0.0)
    if tail > 1e-8 * np.max(np.abs(g.pair.u.real)):
        warnings.warn("rescaled profile truncated at r_max", RuntimeWarning)
    return StatePair(grid, out[0], out[1], g.kappa)


def threshold_quantities(g: GroundStateResult) -> dict:
    """Thresholds entering the blow-up hypotheses.

    d = 4: the ground-state mass (sharp Gagliardo-Nirenberg constant);
    d = 5: E·M (ω-invariant); d = 6: E of the static pair.
    """
    rec = g.record
    d = g.d
    out = {"d": d, "kappa": g.kappa, "E": rec.energy, "M": rec.mass}
    if d == 4:
        out["ground_mass"] = rec.mass
    elif d == 5:
        out["EM"] = rec.energy * rec.mass
    elif d == 6:
        out["E_threshold"] = rec.energy
        out["label"] = g.label
    return out
