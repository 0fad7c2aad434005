"""Quantized homogeneous feedback: dilations, LMI synthesis, spherical quantizer, simulation."""

from .dilation import (
    Dilation,
    canonical_norm,
    canonical_norm_batch,
    canonical_norm_gradient,
    homogeneous_projector,
    matrix_exponential,
)
from .errors import (
    DivergenceError,
    HomQuantError,
    InfeasibleError,
    InvalidInputError,
    NotCertifiedError,
)
from .quantizer import SphericalQuantizer, budget_to_resolution, quantize, quantize_batch
from .simulator import PerturbationSpec, SimulationConfig, Trajectory, integrate, lyapunov_report
from .synthesis import (
    GainCertificate,
    PlantModel,
    compute_rho,
    matched_gain_scale,
    maximize_decay_rate,
    solve_baseline_lmi,
    solve_gain_lmi,
    solve_homogenization,
    verify_lmi,
)

__version__ = "0.1.0"

__all__ = [
    "Dilation",
    "canonical_norm",
    "canonical_norm_batch",
    "canonical_norm_gradient",
    "homogeneous_projector",
    "matrix_exponential",
    "DivergenceError",
    "HomQuantError",
    "InfeasibleError",
    "InvalidInputError",
    "NotCertifiedError",
    "SphericalQuantizer",
    "budget_to_resolution",
    "quantize",
    "quantize_batch",
    "PerturbationSpec",
    "SimulationConfig",
    "Trajectory",
    "integrate",
    "lyapunov_report",
    "GainCertificate",
    "PlantModel",
    "compute_rho",
    "matched_gain_scale",
    "maximize_decay_rate",
    "solve_baseline_lmi",
    "solve_gain_lmi",
    "solve_homogenization",
    "verify_lmi",
]
