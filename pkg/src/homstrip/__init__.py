"""Numerical homogenization of elliptic operators periodic in one direction.

Effective coefficients, O(eps) resolvent-rate sweeps, Floquet-Bloch fiber
diagnostics and the ground-state factorization of a singular Schroedinger
operator, on a doubly periodic torus.
"""
from .errors import (
    ConfigurationError,
    HomstripError,
    HypothesisViolation,
    NonConvergenceError,
    NumericalError,
)
from .fields import CoefficientField, HypothesisConstants, eval_field, validate_hypotheses
from .effective import EffectiveProfile, arithmetic_mean_x1, effective_profile, harmonic_mean_x1
from .discretize import (
    SparseOperator,
    TorusGrid,
    assemble_divgrad,
    assemble_effective_operator,
    assemble_eps_operator,
    assemble_fiber_operator,
    multiplication_operator,
)
from .linsolve import (
    NormEstimate,
    SolveOptions,
    cg_solve,
    power_iteration,
    resolvent_gap,
    smallest_eigenpair,
)
from .scenario import ProblemScenario, load_scenario, serialize_scenario
from .sweep import ConvergenceReport, emit_report, run_sweep

__version__ = "0.1.0"
