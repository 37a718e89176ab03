"""Numerical laboratory for the quadratic two-component NLS system

    i u_t + Δu = v ū,    i v_t + κ Δv = u²

restricted to radial data in d = 4, 5, 6.
"""

from quadnls.radial import RadialField, RadialGrid, gradient_norm_sq, integrate, laplacian, make_grid
from quadnls.functionals import (
    FunctionalRecord,
    ReducedParams,
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
from quadnls.cutoff import CutoffProfile, build_cutoff, chi_derivatives, validate_cutoff
from quadnls.groundstate import (
    GroundStateResult,
    explicit_static_pair,
    rescale_ground_state,
    solve_ground_state,
    threshold_quantities,
)
from quadnls.evolve import EvolveConfig, Trajectory, detect_blowup, evolve, step
from quadnls.virial import (
    CoercivityReport,
    VirialRecord,
    coercivity_track,
    growth_fit,
    identity_residual,
    remainders,
    virial_I,
    virial_J,
    virial_V,
)

__version__ = "0.1.0"
