"""Steady 3-D compressible Euler flow with wall friction in a duct.

Modules: gas (equation of state), spectral (grid and transforms),
background (1-D Fanno flow and normal shocks), elliptic (nonlocal
pressure problem), transport (characteristics and marching), iteration
(nonlinear terms and the Picard solver), cli (command-line front end).
"""
from .background import FannoFlow, BackgroundProfile, construct_transonic_shock, integrate_background, max_length
from .elliptic import assemble_coefficients, check_s_condition, solve_nonlocal_elliptic
from .errors import (
    ChokingError,
    DegeneracyError,
    DivergenceError,
    DomainError,
    FannoError,
    NearResonanceError,
    NotSubsonicError,
    ShapeError,
    SonicSingularityError,
    StageError,
)
from .gas import GasModel, ThermoState, sound_speed_sq
from .iteration import (
    BoundaryData,
    IterationConfig,
    PerturbationState,
    SolverContext,
    apply_T,
    euler_residual,
    solve_fixed_point,
)
from .spectral import DuctSpec, FourierField, analyze, synthesize
from .transport import march, trace_characteristics

__version__ = "0.1.0"
