"""Numerical toolkit for the refined blow-up profiles of quintic KdV and the
time/space asymptotics of the minimal-mass regime."""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    Grid,
    GridFunction,
    differentiate,
    inner,
    integrate,
    line_grid,
    periodic_grid,
    sample_at,
    weighted_norm,
)
from .ground_state import (  # noqa: F401
    SolitonConstants,
    energy,
    gn_ratio,
    ground_state,
    mass,
    scaling_generator,
    soliton_constants,
)
from .linearized import LinearizedOperator  # noqa: F401
from .profiles import (  # noqa: F401
    LocalizedProfile,
    ProfileSet,
    build_profiles,
    localized_profile,
    profile_residual,
)
from .evolver import (  # noqa: F401
    EvolverConfig,
    Trajectory,
    cfl_timestep,
    conserved_quantities,
    evolve,
    minimal_mass_initial_data,
)
from .modulation import (  # noqa: F401
    ModulationState,
    decompose,
    decompose_trajectory,
    f0_diagnostic,
    minimal_mass_identities,
    modulation_residuals,
)
from .asymptotics import (  # noqa: F401
    AsymptoticsReport,
    build_report,
    fit_parameters,
    integral_checks,
    tail_profile,
    time_profile_residual,
)
