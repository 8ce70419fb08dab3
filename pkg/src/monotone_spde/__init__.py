"""Monotone stochastic evolution equations with convex potentials.

Finite-difference solver for

    du = div(d k(grad u)) dt + B(t, u) dW

on the unit interval or square with Dirichlet data, through its Yosida
regularization, with a Picard fixed point for multiplicative noise.
"""

__version__ = "0.1.0"

from .convex_core import (
    BUILTIN_NAMES,
    ConvexIntegrand,
    GraphPoint,
    conjugate_eval,
    fenchel_gap,
    get_integrand,
    identity_residuals,
    legendre_conjugate,
    prox_solve,
    yosida_apply,
    yosida_duality_check,
)
from .diagnostics import lambda_sweep, moment_report, refinement_study
from .discretization import Grid
from .errors import (
    BlowUpError,
    ConfigError,
    GuardViolation,
    MaxIterationsError,
    NonContractionError,
    ProxSolverError,
    ResourceGuardError,
    SolverError,
)
from .evolution import (
    SolutionBundle,
    SolverConfig,
    apriori_estimate,
    energy_residual,
    simulate,
    solve_additive,
    step_regularized,
)
from .noise import WienerDriver, get_coefficient
from .picard import continuous_dependence_test, solve_multiplicative, weighted_distance

__all__ = [
    "BUILTIN_NAMES", "ConvexIntegrand", "GraphPoint", "conjugate_eval", "fenchel_gap",
    "get_integrand", "identity_residuals", "legendre_conjugate", "prox_solve",
    "yosida_apply", "yosida_duality_check", "lambda_sweep", "moment_report",
    "refinement_study", "Grid", "BlowUpError", "ConfigError", "GuardViolation",
    "MaxIterationsError", "NonContractionError", "ProxSolverError",
    "ResourceGuardError", "SolverError", "SolutionBundle", "SolverConfig",
    "apriori_estimate", "energy_residual", "simulate", "solve_additive",
    "step_regularized", "WienerDriver", "get_coefficient",
    "continuous_dependence_test", "solve_multiplicative", "weighted_distance",
]
