"""
Quantization of one-dimensional probability measures by minimizing the
maximum mean discrepancy (MMD) to a weighted set of support points.
"""
from .closedform import NormalTargetSpec, WeightMode, deterministic_optimize
from .cost import (CostSample, cost_c, cost_c_double_prime, cost_c_prime, grad_points_c,
                   penalized_objective)
from .distributions import Exponential, Normal, TargetDistribution, Uniform, parse_target
from .errors import (ActiveSetCycle, DegeneratePoints, DomainError, IllConditioned,
                     NumericalAbort, QuantizationError)
from .kernel import Family, KernelSpec, gram
from .linalg import KernelSystem, build_system, solve, solve_bordered
from .sgd import SgdConfig, sgd_quantize, sgd_quantize_penalized
from .weights import (ActiveSetSolution, Quantization, WeightKind, optimal_mmd_sq_probability,
                      optimal_mmd_sq_signed, project_simplex, signed_weights, simplex_weights,
                      sum_to_one_weights)

__version__ = "0.1.0"

__all__ = [
    "ActiveSetCycle", "ActiveSetSolution", "CostSample", "DegeneratePoints", "DomainError",
    "Exponential", "Family", "IllConditioned", "KernelSpec", "KernelSystem", "Normal",
    "NormalTargetSpec", "NumericalAbort", "Quantization", "QuantizationError", "SgdConfig",
    "TargetDistribution", "Uniform", "WeightKind", "WeightMode", "build_system", "cost_c",
    "cost_c_double_prime", "cost_c_prime", "deterministic_optimize", "grad_points_c", "gram",
    "optimal_mmd_sq_probability", "optimal_mmd_sq_signed", "parse_target",
    "penalized_objective", "project_simplex", "sgd_quantize", "sgd_quantize_penalized",
    "signed_weights", "simplex_weights", "solve", "solve_bordered", "sum_to_one_weights",
]
