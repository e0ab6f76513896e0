"""Degenerate clamped Euler-Bernoulli beam y_tt + a(x) y_xxxx = 0 with a(0) = 0.

Finite-difference discretization with an energy-conserving midpoint
integrator, boundary-trace observability estimates and null control at
x = 1 by the Hilbert Uniqueness Method.
"""

from .discretization import (
    BeamOperator,
    Grid,
    ModalBasis,
    WeightedQuadrature,
    assemble_beam_operator,
    build_grid,
    build_quadrature,
    clamped_modes,
    h2_seminorm_sq,
    trace_y_xx_at_1,
    weighted_l2_norm_sq,
)
from .dynamics import BeamState, MidpointStepper, TraceSeries, Trajectory, energy, solve_backward, solve_homogeneous
from .errors import (
    ControlSynthesisFailed,
    DegenBeamError,
    DegeneracyOutOfRange,
    GridTooCoarse,
    InternalSolverFailure,
    InvalidProfile,
    SingularAtOrigin,
    TimeGridMismatch,
    TooManyModes,
    ZeroEnergyData,
)
from .hum import ControlProblem, HUMSolution, synthesize_control, verify_null_control
from .observability import (
    ObservabilityReport,
    estimate_CT,
    identity_residual_first,
    identity_residual_second,
    quotient,
)
from .profiles import (
    DegeneracyClass,
    DegeneracyProfile,
    Regime,
    classify,
    make_custom_profile,
    make_power_profile,
    observability_bounds,
    observability_time,
)

__version__ = "0.1.0"
