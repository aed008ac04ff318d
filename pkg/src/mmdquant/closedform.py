"""
Deterministic quantization of a normal target under the Gaussian kernel.

For P = N(μ, σ²) and the Gaussian kernel of bandwidth ℓ every expectation
in the squared MMD is a Gaussian convolution:

    P_k(x)      = φ(x - μ; σ² + ℓ²)
    E k(ξ, ξ')  = 1 / sqrt(2π (2σ² + ℓ²))

so the squared MMD with optimal weights is an explicit function of the
support points, together with its gradient, and can be minimized without
sampling.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, QuantizationError
from .linalg import check_distinct, factor_matrix, solve, solve_bordered
from .weights import Quantization, WeightKind

__all__ = ["NormalTargetSpec", "WeightMode", "OptimizeResult", "embedding_at",
           "self_energy", "closed_mmd_sq", "closed_mmd_grad", "closed_mmd_sq_and_grad",
           "deterministic_optimize"]

ARMIJO_SLOPE = 1e-4
MIN_STEP = 1e-16


class WeightMode(str, enum.Enum):
    SIGNED = "signed"
    SUM_TO_ONE = "sum_to_one"


@dataclass(frozen=True)
class NormalTargetSpec:
    mean: float
    std: float
    kernel_ell: float

    def __post_init__(self):
        if not (self.std > 0 and self.kernel_ell > 0):
            raise DomainError("std and kernel_ell must be positive")

    @property
    def conv_var(self) -> float:
        return self.std**2 + self.kernel_ell**2

    def quantile_points(self, n: int) -> np.ndarray:
        from scipy.special import ndtri

        return self.mean + self.std * ndtri((np.arange(n) + 0.5) / n)


def embedding_at(t: NormalTargetSpec, x):
    d = np.asarray(x, dtype=float) - t.mean
    return np.exp(-0.5 * d * d / t.conv_var) / math.sqrt(2.0 * math.pi * t.conv_var)


def self_energy(t: NormalTargetSpec) -> float:
    return 1.0 / math.sqrt(2.0 * math.pi * (2.0 * t.std**2 + t.kernel_ell**2))


def _gaussian_matrices(t, x):
    ell2 = t.kernel_ell**2
    diff = x[:, None] - x[None, :]
    K = np.exp(-0.5 * diff * diff / ell2) / math.sqrt(2.0 * math.pi * ell2)
    return K, -diff / ell2 * K


def closed_mmd_sq_and_grad(t: NormalTargetSpec, points, mode=WeightMode.SUM_TO_ONE):
    """Squared MMD with optimal weights and its gradient in the points."""
    mode = WeightMode(mode)
    x = check_distinct(points)
    K, D = _gaussian_matrices(t, x)
    sys = factor_matrix(K, x)
    m = embedding_at(t, x)
    dm = -(x - t.mean) / t.conv_var * m
    W = solve(sys, np.column_stack([m, np.ones_like(m)]))
    w, u = W[:, 0], W[:, 1]
    Dw = D @ w
    f = m @ w
    df = 2.0 * dm * w - 2.0 * w * Dw
    value = self_energy(t) - f
    grad = -df
    if mode is WeightMode.SUM_TO_ONE:
        g, s = w.sum() - 1.0, u.sum()
        Du = D @ u
        dg = dm * u - (u * Dw + Du * w)
        ds = -2.0 * u * Du
        value += g * g / s
        grad = grad + 2.0 * g * dg / s - g * g * ds / s**2
    return float(value), grad


def closed_mmd_sq(t: NormalTargetSpec, points, mode=WeightMode.SUM_TO_ONE) -> float:
    return closed_mmd_sq_and_grad(t, points, mode)[0]


def closed_mmd_grad(t: NormalTargetSpec, points, mode=WeightMode.SUM_TO_ONE) -> np.ndarray:
    return closed_mmd_sq_and_grad(t, points, mode)[1]


def optimal_weights(t: NormalTargetSpec, points, mode=WeightMode.SUM_TO_ONE) -> Quantization:
    x = check_distinct(points)
    sys = factor_matrix(_gaussian_matrices(t, x)[0], x)
    m = embedding_at(t, x)
    if WeightMode(mode) is WeightMode.SIGNED:
        return Quantization(x, solve(sys, m), WeightKind.SIGNED)
    return Quantization(x, solve_bordered(sys, m)[0], WeightKind.SUM_TO_ONE)


@dataclass
class OptimizeResult:
    quantization: Quantization
    mmd_sq: float
    iterations: int
    grad_norm: float
    converged: bool

    @property
    def mmd(self) -> float:
        return math.sqrt(max(self.mmd_sq, 0.0))


def deterministic_optimize(t: NormalTargetSpec, n: int, mode=WeightMode.SUM_TO_ONE, init=None,
                           max_iter: int = 10_000, tol: float = 1e-8,
                           callback=None) -> OptimizeResult:
    """Gradient descent with Armijo backtracking on :func:`closed_mmd_sq`.

    Each iteration tries a Barzilai-Borwein step length and halves it until
    the sufficient-decrease condition holds.  Stops when the gradient norm
    drops to ``tol`` or after ``max_iter`` iterations.  If no acceptable
    step above 1e-16 exists the best iterate is returned with
    ``converged=False``.

    ``callback(k, points)`` is called with every accepted iterate.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    mode = WeightMode(mode)
    x = t.quantile_points(n) if init is None else check_distinct(init).copy()
    if x.size != n:
        raise DomainError(f"expected {n} initial points, got {x.size}")
    f, g = closed_mmd_sq_and_grad(t, x, mode)
    step = 1.0
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        gnorm2 = float(g @ g)
        if math.sqrt(gnorm2) <= tol:
            converged = True
            k -= 1
            break
        alpha = step
        while True:
            trial = x - alpha * g
            try:
                f_new, g_new = closed_mmd_sq_and_grad(t, trial, mode)
            except QuantizationError:
                f_new = math.inf
            if f_new <= f - ARMIJO_SLOPE * alpha * gnorm2:
                break
            alpha *= 0.5
            if alpha < MIN_STEP:
                return _finish(t, x, f, g, k, mode, converged=False)
        s_vec, y_vec = trial - x, g_new - g
        sy = float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / sy if sy > 0 else 2.0 * alpha
        x, f, g = trial, f_new, g_new
        if callback is not None:
            callback(k, x)
    else:
        converged = math.sqrt(float(g @ g)) <= tol
    return _finish(t, x, f, g, k, mode, converged)


def _finish(t, x, f, g, k, mode, converged):
    return OptimizeResult(optimal_weights(t, x, mode), f, k, float(np.linalg.norm(g)), converged)
