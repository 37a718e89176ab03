"""Scalar functionals of a state pair (u, v).

    M(u, v) = ‖u‖² + ‖v‖²
    L(u, v) = ‖∇u‖² + (κ/2) ‖∇v‖²
    P(u, v) = Re ∫ conj(v) u² dx
    E = L + P,        K_d = L + (d/4) P,        S_ω = E/2 + ω M/2

All integrals use the grid quadrature, so ``E = L + P`` holds by
construction and ``8K = 2dE - 2(d-4)L`` to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
import math

import numpy as np

from quadnls.radial import RadialField, RadialGrid, gradient_norm_sq

__all__ = [
    "StatePair",
    "FunctionalRecord",
    "ReducedParams",
    "mass",
    "kinetic",
    "interaction",
    "energy",
    "pohozaev",
    "action",
    "functional_record",
    "gn_ratio",
    "radial_sobolev_ratio",
    "reduce_parameters",
]


@dataclass(frozen=True, eq=False)
class StatePair:
    """The unknown (u, v) of the system together with the coupling κ."""

    grid: RadialGrid
    u: np.ndarray
    v: np.ndarray
    kappa: float

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be positive, got {self.kappa!r}")
        for name in ("u", "v"):
            arr = getattr(self, name)
            if isinstance(arr, RadialField):
                if not arr.grid.same_as(self.grid):
                    raise ValueError(f"{name} lives on {arr.grid}, expected {self.grid}")
                arr = arr.values
            arr = np.array(arr, dtype=complex)
            if arr.shape != (self.grid.n,):
                raise ValueError(f"{name} has shape {arr.shape}, grid has {self.grid.n} nodes")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d(self) -> int:
        return self.grid.d

    def replace(self, u=None, v=None) -> "StatePair":
        return StatePair(self.grid, self.u if u is None else u, self.v if v is None else v, self.kappa)

    def conj(self) -> "StatePair":
        """Initial data for the backward-in-time flow."""
        return self.replace(np.conj(self.u), np.conj(self.v))

    def scaled(self, factor: float) -> "StatePair":
        return self.replace(factor * self.u, factor * self.v)

    def phase_rotated(self, theta: float) -> "StatePair":
        """(e^{iθ} u, e^{2iθ} v), the symmetry respected by the nonlinearity."""
        return self.replace(np.exp(1j * theta) * self.u, np.exp(2j * theta) * self.v)

    def sup_norms(self) -> tuple[float, float]:
        return float(np.max(np.abs(self.u))), float(np.max(np.abs(self.v)))

    def field(self, name: str) -> RadialField:
        return RadialField(self.grid, getattr(self, name))

    @classmethod
    def zeros(cls, grid: RadialGrid, kappa: float) -> "StatePair":
        return cls(grid, np.zeros(grid.n), np.zeros(grid.n), kappa)


@dataclass(frozen=True)
class FunctionalRecord:
    mass: float
    energy: float
    pohozaev: float
    kinetic: float
    interaction: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReducedParams:
    """Coefficients turning the general system into the normalized one.

    If (u, v) solves the general system then
    ``(amp_u u(t, space_scale y), amp_v v(t, space_scale y))`` solves the
    normalized system with coupling ``kappa``.
    """

    kappa: float
    amp_u: float
    amp_v: complex
    space_scale: float


def mass(s: StatePair) -> float:
    w = s.grid.weights
    return float(np.dot(w, np.abs(s.u) ** 2 + np.abs(s.v) ** 2))


def kinetic(s: StatePair, wall: bool = True) -> float:
    """L(u, v); ``wall=False`` drops the Dirichlet half cell (see gradient_norm_sq)."""
    return gradient_norm_sq(s.grid, s.u, wall) + 0.5 * s.kappa * gradient_norm_sq(s.grid, s.v, wall)


def interaction(s: StatePair) -> float:
    """Re ∫ conj(v) u² dx."""
    return float(np.dot(s.grid.weights, np.real(np.conj(s.v) * s.u**2)))


def energy(s: StatePair, wall: bool = True) -> float:
    return kinetic(s, wall) + interaction(s)


def _check_dim(s: StatePair, d) -> int:
    if d is None:
        return s.d
    if d != s.d:
        raise ValueError(f"dimension {d} does not match grid dimension {s.d}")
    return d


def pohozaev(s: StatePair, d: int | None = None, wall: bool = True) -> float:
    d = _check_dim(s, d)
    return kinetic(s, wall) + 0.25 * d * interaction(s)


def action(s: StatePair, omega: float) -> float:
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega!r}")
    return 0.5 * energy(s) + 0.5 * omega * mass(s)


def functional_record(s: StatePair, wall: bool = True) -> FunctionalRecord:
    L = kinetic(s, wall)
    P = interaction(s)
    return FunctionalRecord(
        mass=mass(s), energy=L + P, pohozaev=L + 0.25 * s.d * P, kinetic=L, interaction=P
    )


def gn_ratio(s: StatePair, ground_mass: float | None) -> float:
    """Ratio of the two sides of the sharp Gagliardo-Nirenberg inequality in R^4.

    The inequality says the ratio is at most 1, with equality on the ground state.
    """
    if s.d != 4:
        raise ValueError("the Gagliardo-Nirenberg ratio is defined for d = 4")
    if ground_mass is None or not ground_mass > 0:
        raise ValueError("a positive ground-state mass is required")
    M = mass(s)
    L = kinetic(s)
    if M == 0 or L == 0:
        raise ValueError("zero state (or zero gradient) has no G-N ratio")
    return abs(interaction(s)) / (math.sqrt(M / ground_mass) * L)


def radial_sobolev_ratio(f: RadialField) -> float:
    """max_j r_j^{(d-2)/2} |f(r_j)| / ‖∇f‖."""
    grid = f.grid
    if grid.d < 3:
        raise ValueError("the radial Sobolev inequality needs d >= 3")
    grad = math.sqrt(gradient_norm_sq(grid, f.values))
    if grad == 0:
        raise ValueError("field has zero gradient")
    weighted = grid.nodes ** (0.5 * (grid.d - 2)) * np.abs(f.values)
    return float(np.max(weighted) / grad)


def reduce_parameters(m: float, M_coef: float, lam: complex, mu: complex, c: float, rtol: float = 1e-12) -> ReducedParams:
    """Reduce  i u_t + Δu/(2m) = λ ū v,  i v_t + Δv/(2M) = μ u²  to the normalized system.

    Conservation of mass and energy needs ``λ = c conj(μ)`` with ``c > 0``; any
    other input is rejected.
    """
    if not (m > 0 and M_coef > 0 and c > 0):
        raise ValueError("m, M and c must be positive")
    if lam == 0 or mu == 0:
        raise ValueError("λ and μ must be nonzero")
    target = c * np.conj(mu)
    if abs(lam - target) > rtol * max(abs(lam), abs(target)):
        raise ValueError(f"λ = {lam} is not c·conj(μ) = {target}: no conserved mass/energy")
    return ReducedParams(
        kappa=m / M_coef,
        amp_u=math.sqrt(c) * abs(mu),
        amp_v=complex(c * np.conj(mu)),
        space_scale=1.0 / math.sqrt(2.0 * m),
    )
