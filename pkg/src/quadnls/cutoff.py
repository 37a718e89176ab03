"""Localization weight χ(x) = R² χ₁(|x|/R).

χ₁ is built from its derivative: χ₁'(s) = 2s θ(s) with θ ≡ 1 on [0, 1],
θ ≡ 0 on [2, ∞) and θ(s) = 1 - S(s - 1) on [1, 2], where S is the septic
smoothstep (value, first, second and third derivative matched at both
ends).  Since 0 ≤ θ ≤ 1 and θ' ≤ 0, χ₁' ≤ 2s and χ₁'' = 2θ + 2sθ' ≤ 2
hold by construction; `validate_cutoff` re-checks them numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

__all__ = [
    "Chi1",
    "CutoffProfile",
    "CutoffReport",
    "build_cutoff",
    "chi_derivatives",
    "radial_derivatives",
    "validate_cutoff",
    "bound_constants",
]

_SMOOTHSTEP7 = Polynomial([0, 0, 0, 0, 35, -84, 70, -20])


class Chi1:
    """The profile χ₁ and its derivatives up to order four."""

    def __init__(self):
        # blend polynomials are in x = s - 1
        slope = Polynomial([2.0, 2.0]) * (1.0 - _SMOOTHSTEP7)
        value = slope.integ(lbnd=0.0, k=1.0)
        self._blend = [value]
        for _ in range(4):
            self._blend.append(self._blend[-1].deriv())
        self.plateau = float(value(1.0))

    def __call__(self, s, k: int = 0):
        s = np.asarray(s, dtype=float)
        inner = [s**2, 2.0 * s, np.full_like(s, 2.0), np.zeros_like(s), np.zeros_like(s)][k]
        outer = np.full_like(s, self.plateau if k == 0 else 0.0)
        blend = self._blend[k](s - 1.0)
        return np.where(s <= 1.0, inner, np.where(s >= 2.0, outer, blend))


@dataclass(frozen=True)
class CutoffProfile:
    R: float
    chi1: Chi1 = field(default_factory=Chi1)

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"cutoff radius must be positive, got {self.R!r}")

    @property
    def plateau_value(self) -> float:
        """Value of χ for |x| >= 2R."""
        return self.R**2 * float(self.chi1(2.0))


def build_cutoff(R: float) -> CutoffProfile:
    return CutoffProfile(float(R))


def radial_derivatives(p: CutoffProfile, r) -> list[np.ndarray]:
    """[χ, χ', χ'', χ''', χ''''] as functions of the physical radius."""
    s = np.asarray(r, dtype=float) / p.R
    scale = [p.R**2, p.R, 1.0, 1.0 / p.R, 1.0 / p.R**2]
    return [scale[k] * p.chi1(s, k) for k in range(5)]


def chi_derivatives(p: CutoffProfile, r, d: int):
    """(χ, χ', Δχ, ΔΔχ) at radius ``r`` in R^d."""
    r = np.asarray(r, dtype=float)
    chi, d1, d2, d3, d4 = radial_derivatives(p, r)
    s = r / p.R
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = d2 + (d - 1) * d1 / r
        bilap = d4 + 2 * (d - 1) * d3 / r + (d - 1) * (d - 3) * (d2 / r**2 - d1 / r**3)
    # Exact values where χ = |x|² or χ is constant; also covers r = 0.
    lap = np.where(s <= 1.0, 2.0 * d, np.where(s >= 2.0, 0.0, lap))
    bilap = np.where((s <= 1.0) | (s >= 2.0), 0.0, bilap)
    return chi, d1, lap, bilap


def bound_constants(p: CutoffProfile, d: int, samples: int = 20001) -> dict:
    """Sup-norm constants of the cutoff weights entering the remainder estimates.

    ``bilap``: sup |R² ΔΔχ| over |x| >= R;  ``r3_weight``: sup of
    |χ₁'' + (d-1) χ₁'/s - 2d|;  ``slope``: sup χ₁'.
    """
    s = np.linspace(1.0, 2.0, samples)
    c = p.chi1
    bilap = c(s, 4) + 2 * (d - 1) * c(s, 3) / s + (d - 1) * (d - 3) * (c(s, 2) / s**2 - c(s, 1) / s**3)
    w3 = c(s, 2) + (d - 1) * c(s, 1) / s - 2 * d
    s_all = np.linspace(0.0, 2.0, samples)
    return {
        "bilap": float(np.max(np.abs(bilap))),
        "r3_weight": float(max(np.max(np.abs(w3)), 2 * d)),
        "slope": float(np.max(c(s_all, 1))),
    }


@dataclass
class CutoffReport:
    passed: bool
    worst_violation: float
    violations: list[str]

    def __bool__(self):
        return self.passed


def validate_cutoff(p: CutoffProfile, samples: int = 4000, tol: float = 1e-10, jump_tol: float = 1e-8) -> CutoffReport:
    """Check every constraint on χ₁ on a dense sample of [0, 3]."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    c = p.chi1
    s = np.linspace(0.0, 3.0, samples)
    f = [np.asarray(c(s, k), dtype=float) for k in range(5)]
    inner = s <= 1.0
    mid = (s > 1.0) & (s < 2.0)
    outer = s >= 2.0

    checks: list[tuple[str, float, float]] = []

    def excess(name, values, limit=tol):
        values = np.asarray(values, dtype=float)
        checks.append((name, float(np.max(values)) if values.size else 0.0, limit))

    excess("χ₁ = r² on [0,1] violated", np.abs(f[0][inner] - s[inner] ** 2))
    excess("χ₁′ = 2r on [0,1] violated", np.abs(f[1][inner] - 2 * s[inner]))
    excess("χ₁′ ≤ 2r violated", f[1][mid] - 2 * s[mid])
    excess("χ₁′ = 0 for r ≥ 2 violated", np.abs(f[1][outer]))
    excess("χ₁ constant for r ≥ 2 violated", np.abs(f[0][outer] - float(c(2.0))))
    excess("χ₁″ ≤ 2 violated", f[2] - 2.0)
    excess("χ₁ ≥ 0 violated", -f[0])
    h = 1e-13
    for knot in (1.0, 2.0):
        for k in range(5):
            jump = abs(float(c(knot + h, k)) - float(c(knot - h, k)))
            excess(f"χ₁^({k}) jumps at r = {knot:g}", [jump], jump_tol)

    violations = [name for name, worst, limit in checks if worst > limit]
    worst = max(0.0, *(worst - limit for _, worst, limit in checks))
    return CutoffReport(passed=not violations, worst_violation=worst, violations=violations)
