"""Initial-data recipes and random families of smooth radial states."""

from __future__ import annotations

import numpy as np

from quadnls.functionals import StatePair
from quadnls.radial import RadialGrid


def gaussian_pair(grid: RadialGrid, kappa: float, amplitudes=(1.0, -1.0), widths=(1.0, 1.0), phases=(0.0, 0.0), chirps=(0.0, 0.0)) -> StatePair:
    """u = A_u exp(-r²/w_u² + i β_u r² + i θ_u), and likewise for v."""
    r = grid.nodes

    def profile(a, w, theta, beta):
        return a * np.exp(-(r**2) / w**2 + 1j * (beta * r**2 + theta))

    u = profile(amplitudes[0], widths[0], phases[0], chirps[0])
    v = profile(amplitudes[1], widths[1], phases[1], chirps[1])
    return StatePair(grid, u, v, kappa)


def _random_profile(r, rng, max_radius, n_bumps):
    f = np.zeros_like(r, dtype=complex)
    for _ in range(n_bumps):
        amp = rng.normal() + 1j * rng.normal()
        width = rng.uniform(0.4, 0.35 * max_radius)
        center = rng.uniform(0.0, 0.4 * max_radius)
        chirp = rng.normal(scale=0.5)
        # even in r, so smooth at the origin
        g = np.exp(-((r - center) ** 2) / width**2) + np.exp(-((r + center) ** 2) / width**2)
        f += amp * g * np.exp(1j * chirp * r**2)
    return f


def random_state(grid: RadialGrid, kappa: float, rng: np.random.Generator, max_radius: float | None = None, real: bool = False) -> StatePair:
    """A random smooth radial pair that is negligible beyond ``max_radius``."""
    if max_radius is None:
        max_radius = grid.r_max / 2
    r = grid.nodes
    u = _random_profile(r, rng, max_radius, rng.integers(1, 4))
    v = _random_profile(r, rng, max_radius, rng.integers(1, 4))
    u *= rng.uniform(0.2, 5.0) / np.max(np.abs(u))
    v *= rng.uniform(0.2, 5.0) / np.max(np.abs(v))
    if real:
        u, v = u.real, v.real
    return StatePair(grid, u, v, kappa)


def bump(r, radius: float) -> np.ndarray:
    """C^∞ bump, equal to exp(1 - 1/(1 - (r/radius)²)) inside and 0 outside."""
    x = np.asarray(r, dtype=float) / radius
    out = np.zeros_like(x)
    inside = x < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - x[inside] ** 2))
    return out


def compact_state(grid: RadialGrid, kappa: float, radius: float, rng: np.random.Generator) -> StatePair:
    """Random smooth pair vanishing identically for r >= radius."""
    r = grid.nodes
    cut = bump(r, radius)
    base = random_state(grid, kappa, rng, max_radius=radius)
    return base.replace(base.u * cut, base.v * cut)
