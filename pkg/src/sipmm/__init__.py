"""Unconditionally positivity-preserving projected Milstein schemes for the
generalised Ait-Sahalia interest-rate model, with comparator schemes and a
strong-convergence Monte Carlo harness."""

__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, DomainError, StepSizeError
from .projection import ProjectionConfig, default_exponent, project
from .model import (
    EXAMPLE_1,
    EXAMPLE_2,
    EXAMPLE_3,
    ModelParams,
    Regime,
    classify_regime,
    drift,
    f,
    g,
    g_hat,
    validate,
)
from .schemes import (
    SchemeKind,
    StepInput,
    Trajectory,
    bem_step,
    integrate,
    sipem_step,
    sipmm_step,
)
from .brownian import BrownianLattice, coarsen, generate
from .harness import (
    ConvergenceReport,
    ExperimentConfig,
    fit_rate,
    positivity_stress,
    run_strong_error,
    time_schemes,
)

__all__ = [
    "BrownianLattice",
    "ConfigError",
    "ConvergenceError",
    "ConvergenceReport",
    "DomainError",
    "EXAMPLE_1",
    "EXAMPLE_2",
    "EXAMPLE_3",
    "ExperimentConfig",
    "ModelParams",
    "ProjectionConfig",
    "Regime",
    "SchemeKind",
    "StepInput",
    "StepSizeError",
    "Trajectory",
    "bem_step",
    "classify_regime",
    "coarsen",
    "default_exponent",
    "drift",
    "f",
    "fit_rate",
    "g",
    "g_hat",
    "generate",
    "integrate",
    "positivity_stress",
    "project",
    "run_strong_error",
    "sipem_step",
    "sipmm_step",
    "time_schemes",
    "validate",
]
