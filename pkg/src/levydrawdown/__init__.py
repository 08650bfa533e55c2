"""Drawdown exit identities for spectrally negative Levy processes.

Evaluates two-sided exit transforms, creeping/hitting transforms and killed
potential measures under general drawdown boundaries, with closed-form and
transform-inversion scale functions and a Monte Carlo verification oracle.
"""
from .drawdown import DrawdownFunction
from .errors import (
    DrawdownDegenerateError,
    InsufficientEventsError,
    InversionAccuracyError,
    IterationError,
    LevyDrawdownError,
    UnsupportedRegimeError,
)
from .identities import (
    ExitQuery,
    IdentityResult,
    MassBalance,
    classical_creeping,
    classical_down_exit_transform,
    classical_hitting,
    classical_killed_potential_density,
    classical_suite,
    classical_up_exit,
    creeping_transform,
    drawdown_triple_transform,
    excursion_functionals,
    hitting_transform,
    linear_creeping,
    linear_drawdown_transform,
    linear_potential_density,
    linear_up_exit,
    potential_bin_masses,
    potential_density,
    potential_density_grid,
    potential_mass_check,
    reflected_creeping,
    reflected_depth_density,
    reflected_drawdown_limit,
    reflected_drawdown_transform,
    reflected_max_rate,
    reflected_pass_probability,
    reflected_potential_density,
    reflected_suite,
    reflected_up_exit,
    reflected_zero_atom,
    up_exit_before_drawdown,
)
from .mc import (
    EventKind,
    PathEnsemble,
    SimConfig,
    creep_fraction,
    estimate_potential_histogram,
    estimate_transform,
    extrapolate_sqrt_dt,
    run_levels,
    simulate,
)
from .models import JumpSpec, LevyModel, brownian_motion, cramer_lundberg
from .scale import (
    ClosedFormScale,
    InversionScale,
    TiltedScale,
    scale_function,
    tilted_scale,
)

__version__ = "0.1.0"
