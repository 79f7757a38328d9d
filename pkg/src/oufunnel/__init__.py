"""Simulation and verification toolkit for the density of a controlled
Ornstein-Uhlenbeck process.

Two independent solvers evolve the density of the drift-controlled process:
a spectral solver carrying the coefficients of a weighted multi-index
Hermite expansion, and a 1-d finite-difference reference solver on a
truncated domain.  A funnel controller and a feedforward law close the loop
on the mean output, and a diagnostics layer checks every closed-form
property of the dynamics (mass conservation, positivity, the exponential
covariance law, output-tracking laws, funnel invariance) on persisted run
records.
"""

from .control import (
    FeedforwardController,
    FunnelController,
    FunnelSpec,
    OpenLoopInput,
    ReferenceSignal,
    disturbance_mean,
    feedforward_input,
    funnel_input,
    mean_ode_closed_loop,
)
from .densities import GaussianDensity, PiecewiseUniform, StationaryDensity
from .diagnostics import (
    RunRecord,
    check_covariance_law,
    check_funnel,
    cross_validate,
    run_checks,
)
from .errors import ConfigError, FunnelViolation, SolverAbort
from .fd import fd_moments, fd_rhs, fd_step, make_grid_state
from .hermite import (
    BasisTable,
    QuadratureRule,
    build_basis,
    build_rule,
    hermite_eval,
    hermite_orthogonality,
)
from .model import (
    OuModel,
    build_model,
    disturbance,
    jacobi_eigh,
    nonlinearity,
    phi_eval,
    stationary_density,
)
from .scenario import Scenario, builtin_config, resolve_config, run_scenario
from .spectral import SpectralState, moments, project_initial, reconstruct, rhs, step

__version__ = "0.1.0"
