"""Numerical certificates of local minimality for multiple integrals.

The pipeline follows the field-of-extremals argument: a candidate that is
stationary, embedded in an exact slope field and paired with a Lagrangian
convex in the gradient slot has nonnegative Weierstrass excess along every
competitor in the covered tube, hence a smaller functional value.
"""

from .certify import (CertificationReport, FailureReason, InvalidProblem, NumericalFailure,
                      ProblemSpec, Sampling, Tolerances, Verdict, certify)
from .domain import BoxDomain, Grid, GridFunction, discrete_gradient, quadrature, sample
from .excess import (ExcessSummary, excess_field, excess_point, functional, gap_identity_error,
                     gap_profile)
from .expr import DomainError, Expr, ParseError, diff, evaluate, parse, to_string
from .field import (ExpressionFamily, ShootingFamily, SlopeField, TubeCoverage, UncoveredError,
                    tube_coverage)
from .hilbert import InvarianceStats, hilbert_integral, invariance_check, sample_perturbations
from .lagrangian import ConvexityResult, LagrangianSpec, build, convexity_check
from .problem import load_problem
from .stationarity import el_residual, solve_el_ivp_1d

__version__ = "0.1.0"

__all__ = [
    "BoxDomain", "CertificationReport", "ConvexityResult", "DomainError", "ExcessSummary",
    "Expr", "ExpressionFamily", "FailureReason", "Grid", "GridFunction", "InvalidProblem",
    "InvarianceStats", "LagrangianSpec", "NumericalFailure", "ParseError", "ProblemSpec",
    "Sampling", "ShootingFamily", "SlopeField", "Tolerances", "TubeCoverage", "UncoveredError",
    "Verdict", "build", "certify", "convexity_check", "diff", "discrete_gradient",
    "el_residual", "evaluate", "excess_field", "excess_point", "functional",
    "gap_identity_error", "gap_profile", "hilbert_integral", "invariance_check",
    "load_problem", "parse", "quadrature", "sample", "sample_perturbations",
    "solve_el_ivp_1d", "to_string", "tube_coverage",
]
