"""Time integration of the radial system

    i u_t + Δu = v ū,    i v_t + κ Δv = u².

The default scheme is Strang splitting: half a Crank-Nicolson step of the
two decoupled linear flows, a full step of the pointwise system
``u' = -i v ū, v' = -i u²`` and another linear half step.  Crank-Nicolson is
unitary for the weighted inner product, and the pointwise system conserves
|u|² + |v|² node by node, so the discrete mass is conserved up to the
round-off of the nonlinear substep.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import logging
import math

import numpy as np
from scipy.linalg import lapack

from quadnls.functionals import StatePair
from quadnls.radial import RadialGrid, gradient_norm_sq

log = logging.getLogger(__name__)

__all__ = [
    "EvolveConfig",
    "Trajectory",
    "NumericalFailure",
    "ConservationError",
    "step",
    "evolve",
    "detect_blowup",
    "modulus_drift",
    "modulus_drift_series",
]

SCHEMES = ("strang-splitting", "implicit-midpoint")
SUBSTEPS = ("rk4", "exact-if-available")
TERMINATIONS = ("reached_t_end", "blowup_detected", "step_underflow")


class NumericalFailure(RuntimeError):
    """A linear solve or fixed-point iteration broke down."""


class ConservationError(NumericalFailure):
    """Mass or energy drifted far beyond tolerance: a scheme bug, not physics."""


@dataclass
class EvolveConfig:
    dt0: float = 1e-3
    t_end: float = 1.0
    cfl_safety: float = 0.9
    adaptive: bool = True
    dt_min: float = 1e-10
    blowup_norm_cap: float | None = None
    blowup_factor: float = 1e3
    conservation_tol: float = 1e-6
    scheme: str = "strang-splitting"
    nonlinear_substep: str = "rk4"
    snapshot_stride: int = 0
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not (self.dt0 > 0 and self.t_end > 0):
            raise ValueError("dt0 and t_end must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.blowup_norm_cap is not None and not self.blowup_norm_cap > 0:
            raise ValueError("blowup_norm_cap must be positive")
        if not (self.blowup_factor > 1 and self.conservation_tol > 0 and self.dt_min > 0):
            raise ValueError("blowup_factor > 1, conservation_tol > 0 and dt_min > 0 required")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.nonlinear_substep not in SUBSTEPS:
            raise ValueError(f"unknown nonlinear substep {self.nonlinear_substep!r}")

    def as_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# building blocks


def _cn_solve(grid: RadialGrid, f: np.ndarray, tau: float, coef: float) -> np.ndarray:
    """Crank-Nicolson step of f_t = i coef Δ f over time tau."""
    diag, off = grid.stiffness_bands
    w = grid.weights
    a = 0.5j * tau * coef
    rhs = w * f - a * diag * f
    rhs[:-1] -= a * off * f[1:]
    rhs[1:] -= a * off * f[:-1]
    sub = (a * off).astype(complex)
    _, _, _, x, info = lapack.zgtsv(sub, (w + a * diag).astype(complex), sub.copy(), rhs)
    if info != 0:
        raise NumericalFailure(f"tridiagonal solve failed (info={info}) at tau={tau:g}")
    return x


def _pointwise_rhs(u, v):
    return -1j * v * np.conj(u), -1j * u * u


def _rk4(u, v, h):
    k1u, k1v = _pointwise_rhs(u, v)
    k2u, k2v = _pointwise_rhs(u + 0.5 * h * k1u, v + 0.5 * h * k1v)
    k3u, k3v = _pointwise_rhs(u + 0.5 * h * k2u, v + 0.5 * h * k2v)
    k4u, k4v = _pointwise_rhs(u + h * k3u, v + h * k3v)
    return (
        u + h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u),
        v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v),
    )


def _nonlinear_flow(u, v, dt, method):
    if method == "rk4":
        return _rk4(u, v, dt)
    # No usable closed form is known for the pointwise system; substep RK4
    # until the local error is at round-off level.
    amp = max(np.max(np.abs(u)), np.max(np.abs(v)), 1e-300)
    m = max(1, math.ceil(abs(dt) * amp / 0.01))
    h = dt / m
    for _ in range(m):
        u, v = _rk4(u, v, h)
    return u, v


def _strang(s: StatePair, dt: float, cfg: EvolveConfig) -> StatePair:
    g, k = s.grid, s.kappa
    u = _cn_solve(g, s.u, 0.5 * dt, 1.0)
    v = _cn_solve(g, s.v, 0.5 * dt, k)
    u, v = _nonlinear_flow(u, v, dt, cfg.nonlinear_substep)
    u = _cn_solve(g, u, 0.5 * dt, 1.0)
    v = _cn_solve(g, v, 0.5 * dt, k)
    return s.replace(u, v)


def _implicit_midpoint(s: StatePair, dt: float, cfg: EvolveConfig, tol=1e-14, max_iter=100) -> StatePair:
    # (x⁺ - x)/dt = A (x⁺ + x)/2 + N((x⁺ + x)/2), solved by fixed-point
    # iteration on the nonlinear part with the linear part treated exactly.
    g, k = s.grid, s.kappa
    u_lin = _cn_solve(g, s.u, dt, 1.0)
    v_lin = _cn_solve(g, s.v, dt, k)
    u_new, v_new = u_lin, v_lin
    for _ in range(max_iter):
        um, vm = 0.5 * (u_new + s.u), 0.5 * (v_new + s.v)
        nu, nv = _pointwise_rhs(um, vm)
        u_next = u_lin + _cn_inverse_apply(g, dt * nu, dt, 1.0)
        v_next = v_lin + _cn_inverse_apply(g, dt * nv, dt, k)
        change = max(np.max(np.abs(u_next - u_new)), np.max(np.abs(v_next - v_new)))
        scale = max(np.max(np.abs(u_next)), np.max(np.abs(v_next)), 1e-300)
        u_new, v_new = u_next, v_next
        if change <= tol * scale:
            return s.replace(u_new, v_new)
    raise NumericalFailure(f"implicit midpoint iteration did not converge at dt={dt:g}")


def _cn_inverse_apply(grid, f, tau, coef):
    """(I - i tau coef Δ / 2)^{-1} f."""
    diag, off = grid.stiffness_bands
    w = grid.weights
    a = 0.5j * tau * coef
    sub = (a * off).astype(complex)
    _, _, _, x, info = lapack.zgtsv(sub, (w + a * diag).astype(complex), sub.copy(), w * f)
    if info != 0:
        raise NumericalFailure(f"tridiagonal solve failed (info={info})")
    return x


def step(s: StatePair, dt: float, cfg: EvolveConfig | None = None) -> StatePair:
    """Advance the state by one time step ``dt`` (negative dt runs backwards)."""
    cfg = cfg or EvolveConfig()
    if dt == 0:
        return s
    if cfg.scheme == "implicit-midpoint":
        return _implicit_midpoint(s, dt, cfg)
    return _strang(s, dt, cfg)


# ---------------------------------------------------------------------------
# trajectories

BASE_COLUMNS = ("t", "M", "E", "K", "L", "P", "grad_u", "grad_v", "sup_u", "sup_v", "dt")
VIRIAL_COLUMNS = ("V", "J", "I", "R1", "R2", "R3")


@dataclass
class Trajectory:
    grid: RadialGrid
    kappa: float
    config: EvolveConfig
    diagnostics: dict[str, np.ndarray]
    snapshots: list[tuple[float, StatePair]] = field(default_factory=list)
    termination: str = "reached_t_end"
    cutoff_R: float | None = None
    final: StatePair | None = None

    @property
    def times(self) -> np.ndarray:
        return self.diagnostics["t"]

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    def column(self, name: str) -> np.ndarray:
        return self.diagnostics[name]

    @property
    def mass_drift(self) -> float:
        M = self.diagnostics["M"]
        return float(np.max(np.abs(M - M[0])) / M[0]) if M[0] > 0 else 0.0

    @property
    def energy_drift(self) -> float:
        E = self.diagnostics["E"]
        return float(np.max(np.abs(E - E[0])) / max(abs(E[0]), 1e-300))

    @property
    def scaled_energy_drift(self) -> float:
        """Energy drift measured against |E(0)| + L(t), meaningful when E(0) ≈ 0."""
        E, L = self.diagnostics["E"], self.diagnostics["L"]
        return float(np.max(np.abs(E - E[0]) / (abs(E[0]) + L)))

    @property
    def blowup_time(self) -> float | None:
        return float(self.times[-1]) if self.termination == "blowup_detected" else None


def _diagnostic_row(s: StatePair, t: float, dt: float, virial=None) -> dict:
    g = s.grid
    gu = gradient_norm_sq(g, s.u)
    gv = gradient_norm_sq(g, s.v)
    L = gu + 0.5 * s.kappa * gv
    P = float(np.dot(g.weights, np.real(np.conj(s.v) * s.u**2)))
    su, sv = s.sup_norms()
    row = {
        "t": t,
        "M": float(np.dot(g.weights, np.abs(s.u) ** 2 + np.abs(s.v) ** 2)),
        "E": L + P,
        "K": L + 0.25 * g.d * P,
        "L": L,
        "P": P,
        "grad_u": gu,
        "grad_v": gv,
        "sup_u": su,
        "sup_v": sv,
        "dt": dt,
    }
    if virial is not None:
        rec = virial.evaluate(s)
        row.update({k: rec[k] for k in VIRIAL_COLUMNS})
    return row


def evolve(s0: StatePair, cfg: EvolveConfig, cutoff=None) -> Trajectory:
    """Integrate from ``s0`` until t_end, blow-up detection or step underflow.

    With a ``cutoff`` the localized virial quantities are recorded every step.
    """
    virial = None
    if cutoff is not None:
        from quadnls.virial import VirialEvaluator

        virial = VirialEvaluator(s0.grid, cutoff, s0.kappa)

    sup0 = max(s0.sup_norms())
    cap = cfg.blowup_norm_cap if cfg.blowup_norm_cap is not None else cfg.blowup_factor * max(sup0, 1e-300)
    rows = [_diagnostic_row(s0, 0.0, 0.0, virial)]
    snaps = [(0.0, s0)] if cfg.snapshot_stride else []
    M0, E0 = rows[0]["M"], rows[0]["E"]
    abort = 100 * cfg.conservation_tol

    s, t, termination = s0, 0.0, "reached_t_end"
    for n in range(1, cfg.max_steps + 1):
        remaining = cfg.t_end - t
        if remaining <= 1e-14 * cfg.t_end:
            break
        if cfg.adaptive:
            dt = cfg.dt0 * cfg.cfl_safety / (1.0 + max(rows[-1]["sup_u"], rows[-1]["sup_v"]))
        else:
            dt = cfg.dt0
        if dt < cfg.dt_min:
            termination = "step_underflow"
            break
        dt = min(dt, remaining)
        s = step(s, dt, cfg)
        t = cfg.t_end if dt == remaining else t + dt
        row = _diagnostic_row(s, t, dt, virial)
        rows.append(row)
        if cfg.snapshot_stride and n % cfg.snapshot_stride == 0:
            snaps.append((t, s))
        if not all(math.isfinite(row[k]) for k in ("M", "E", "sup_u", "sup_v")):
            raise NumericalFailure(f"non-finite state at t={t:g}")
        if M0 > 0 and abs(row["M"] - M0) / M0 > abort:
            raise ConservationError(f"mass drift {abs(row['M'] - M0) / M0:.3e} at t={t:g}")
        if abs(row["E"] - E0) / (abs(E0) + row["L"]) > abort:
            raise ConservationError(f"energy drift {abs(row['E'] - E0):.3e} at t={t:g}")
        if max(row["sup_u"], row["sup_v"]) >= cap:
            termination = "blowup_detected"
            break
    else:
        log.warning("max_steps=%d reached at t=%g", cfg.max_steps, t)

    if cfg.snapshot_stride and snaps[-1][0] != t:
        snaps.append((t, s))
    diagnostics = {k: np.array([r[k] for r in rows]) for k in rows[0]}
    log.info("evolve: %s at t=%.6g after %d steps", termination, t, len(rows) - 1)
    return Trajectory(
        grid=s0.grid,
        kappa=s0.kappa,
        config=cfg,
        diagnostics=diagnostics,
        snapshots=snaps,
        termination=termination,
        cutoff_R=None if cutoff is None else cutoff.R,
        final=s,
    )


def modulus_drift_series(tr: Trajectory, reference: StatePair) -> tuple[np.ndarray, np.ndarray]:
    """Times of the snapshots and ‖ |u(t)| - |u_ref| ‖_∞ / ‖u_ref‖_∞ (worse of u and v)."""
    ru, rv = np.abs(reference.u), np.abs(reference.v)
    times, drift = [], []
    for t, snap in tr.snapshots:
        times.append(t)
        drift.append(max(
            np.max(np.abs(np.abs(snap.u) - ru)) / np.max(ru),
            np.max(np.abs(np.abs(snap.v) - rv)) / np.max(rv),
        ))
    return np.array(times), np.array(drift)


def modulus_drift(tr: Trajectory, reference: StatePair) -> float:
    """Largest relative change of the moduli over the stored snapshots."""
    _, drift = modulus_drift_series(tr, reference)
    return float(drift.max()) if drift.size else 0.0


# ---------------------------------------------------------------------------
# classification

CLASSES = ("blowup", "growup-candidate", "bounded", "undetermined")


def _power_exponent(t, y):
    mask = (t > 0) & (y > 0)
    if mask.sum() < 3:
        return float("nan")
    return float(np.polyfit(np.log(t[mask]), np.log(y[mask]), 1)[0])


def detect_blowup(tr: Trajectory, growth_exponent: float = 0.1, bounded_factor: float = 4.0) -> dict:
    """Classify a trajectory as blowup, growup-candidate, bounded or undetermined.

    Grow-up is asymptotic, so a finished finite-time run can only ever be a
    grow-up *candidate*.
    """
    t = tr.times
    L = tr.column("L")
    dts = tr.column("dt")[1:]
    result = {"classification": "undetermined", "termination": tr.termination}
    if len(t) < 2:
        return result
    L_increasing = bool(L[-1] > L[0])
    if tr.termination == "blowup_detected":
        shrinking = bool(dts[-1] < dts[0])
        result.update(L_increasing=L_increasing, dt_shrinking=shrinking, blowup_time=float(t[-1]))
        if L_increasing and (shrinking or not tr.config.adaptive):
            result["classification"] = "blowup"
        return result
    if tr.termination != "reached_t_end":
        return result
    late = t >= 0.5 * t[-1]
    exp_u = _power_exponent(t[late], np.sqrt(tr.column("grad_u")[late]))
    exp_v = _power_exponent(t[late], np.sqrt(tr.column("grad_v")[late]))
    rising = np.mean(np.diff(L[late]) > 0) if late.sum() > 1 else 0.0
    result.update(exponent_grad_u=exp_u, exponent_grad_v=exp_v, L_ratio=float(np.max(L) / L[0]))
    if exp_u > growth_exponent and exp_v > growth_exponent and rising >= 0.9 and L_increasing:
        result["classification"] = "growup-candidate"
    elif np.max(L) <= bounded_factor * L[0]:
        result["classification"] = "bounded"
    return result
