"""Finite-horizon Kalman gains by direct policy optimization.

Solve for the gain schedule of a finite-horizon linear-Gaussian filter three
ways: the classical forward Riccati recursion (needs noise covariances),
exact gradient descent on the prediction cost (also needs them), and
observation-only stochastic gradient descent (does not). Independent oracles
(a control-side dual simulation and a stacked-noise representation) verify
the cost and gradient implementations against each other.
"""

from .model import (
    ModelSpec,
    NoiseSpec,
    ObservationBatch,
    Trajectory,
    ValidationReport,
    model_from_config,
    sample_batch,
    simulate,
    trajectory_seed,
    validate,
    zero_gains,
)
from .objective import (
    CostGradient,
    DiagnosticConstants,
    almost_smoothness_gap,
    apply_propagation,
    closed_loop,
    cost,
    diagnostics,
    error_covariances,
    gradient,
    sigma_weight,
    stage_weights,
)
from .riccati import RiccatiSolution, solve_riccati
from .dualsim import (
    DualCostEstimate,
    StackedRepresentation,
    build_stacked,
    dual_cost_mc,
    residual_cost_offset,
    simulate_dual,
    stacked_cost_and_gradient,
)
from .learner import (
    DivergenceError,
    GradientEstimate,
    Prediction,
    RunTrace,
    SGDConfig,
    estimate_gradient,
    predict,
    run_gd,
    run_sgd,
    sample_cost,
)
from .presets import PRESETS, benchmark_config, load_instance, preset_config

__version__ = "0.1.0"

__all__ = [
    "ModelSpec",
    "NoiseSpec",
    "ObservationBatch",
    "Trajectory",
    "ValidationReport",
    "model_from_config",
    "sample_batch",
    "simulate",
    "trajectory_seed",
    "validate",
    "zero_gains",
    "CostGradient",
    "DiagnosticConstants",
    "almost_smoothness_gap",
    "apply_propagation",
    "closed_loop",
    "cost",
    "diagnostics",
    "error_covariances",
    "gradient",
    "sigma_weight",
    "stage_weights",
    "RiccatiSolution",
    "solve_riccati",
    "DualCostEstimate",
    "StackedRepresentation",
    "build_stacked",
    "dual_cost_mc",
    "residual_cost_offset",
    "simulate_dual",
    "stacked_cost_and_gradient",
    "DivergenceError",
    "GradientEstimate",
    "Prediction",
    "RunTrace",
    "SGDConfig",
    "estimate_gradient",
    "predict",
    "run_gd",
    "run_sgd",
    "sample_cost",
    "PRESETS",
    "benchmark_config",
    "load_instance",
    "preset_config",
]
