"""One-dimensional contact process: monotone couplings, duality-based
sensitivity estimators and exact small-ring oracles."""

from .engine import (
    CoupledTrajectory,
    CouplingViolation,
    run_batch,
    run_coupled_initial,
    run_coupled_lambda,
    run_single,
    sample_bernoulli_window,
)
from .estimators import (
    DegenerateConditioning,
    EstimateWithCI,
    SensitivityPoint,
    conditional_independence_test,
    conditional_occupation,
    delta_sensitivity,
    occupation_probability,
    sensitivity_direct,
    sensitivity_dual,
    survival_probability,
    survival_profile,
)
from .lattice import (
    Configuration,
    ModelParams,
    ValidationError,
    WindowLambdaR,
    f_sensitivity,
    imp_margin,
    imp_threshold,
)
from .rng import ReplicaKey

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "CoupledTrajectory",
    "CouplingViolation",
    "DegenerateConditioning",
    "EstimateWithCI",
    "ModelParams",
    "ReplicaKey",
    "SensitivityPoint",
    "ValidationError",
    "WindowLambdaR",
    "conditional_independence_test",
    "conditional_occupation",
    "delta_sensitivity",
    "f_sensitivity",
    "imp_margin",
    "imp_threshold",
    "occupation_probability",
    "run_batch",
    "run_coupled_initial",
    "run_coupled_lambda",
    "run_single",
    "sample_bernoulli_window",
    "sensitivity_direct",
    "sensitivity_dual",
    "survival_probability",
    "survival_profile",
]
