"""
Optimal weights of a discrete measure with fixed support points.

With ``K`` the kernel matrix of the support points and ``m_i = P_k(x_i)`` the
target embedding at each point, the squared MMD of weights ``p`` is

    MMD² = E k(ξ, ξ') - 2 pᵀm + pᵀKp.

Three feasible sets are handled: unrestricted weights, weights summing to
one, and weights on the probability simplex.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import ActiveSetCycle, QuantizationError
from .linalg import KernelSystem, check_distinct, solve, solve_bordered

__all__ = [
    "WeightKind", "Quantization", "ActiveSetSolution", "signed_weights",
    "sum_to_one_weights", "simplex_weights", "project_simplex", "mmd_sq",
    "optimal_mmd_sq_signed", "optimal_mmd_sq_probability", "probability_penalty",
]

NEGATIVE_TOL = 1e-12
DUAL_TOL = 1e-10
SUM_TOL = 1e-10


class WeightKind(str, enum.Enum):
    SIGNED = "signed"
    SUM_TO_ONE = "sum_to_one"
    SIMPLEX = "simplex"


@dataclass(frozen=True)
class Quantization:
    """Discrete measure ``Σ p_i δ_{x_i}``."""

    points: np.ndarray
    weights: np.ndarray
    kind: WeightKind

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).copy())
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).copy())
        object.__setattr__(self, "kind", WeightKind(self.kind))
        self.validate()

    def validate(self) -> None:
        if self.points.shape != self.weights.shape or self.points.ndim != 1:
            raise QuantizationError("points and weights must be 1-D arrays of equal length")
        check_distinct(self.points)
        if self.kind is not WeightKind.SIGNED and abs(self.weights.sum() - 1.0) > SUM_TOL:
            raise QuantizationError(f"{self.kind.value} weights sum to {self.weights.sum()!r}")
        if self.kind is WeightKind.SIMPLEX and np.min(self.weights) < -NEGATIVE_TOL:
            raise QuantizationError("simplex weights must be non-negative")

    @property
    def n(self) -> int:
        return self.points.size

    def embedding(self, spec, y):
        """``Σ p_i k(x_i, y)`` evaluated at ``y``."""
        y = np.asarray(y, dtype=float)
        return spec.eval(y[..., None], self.points) @ self.weights


@dataclass(frozen=True)
class ActiveSetSolution:
    """Simplex-constrained weights with their KKT multipliers.

    ``active_set`` lists the indices whose weight is pinned at zero and
    ``multipliers`` the corresponding non-negativity multipliers, in the same
    order.  ``lam`` is the multiplier of the sum constraint.
    """

    quantization: Quantization
    active_set: tuple
    multipliers: np.ndarray
    lam: float
    iterations: int
    history: list = field(default_factory=list, repr=False)


def signed_weights(sys: KernelSystem, m) -> Quantization:
    """Unrestricted optimum ``K⁻¹ m``."""
    return Quantization(sys.points, solve(sys, m), WeightKind.SIGNED)


def sum_to_one_weights(sys: KernelSystem, m) -> Quantization:
    """Best weights subject to ``Σ p = 1`` (may be negative)."""
    p, _ = solve_bordered(sys, m)
    return Quantization(sys.points, p, WeightKind.SUM_TO_ONE)


def simplex_weights(sys: KernelSystem, m, max_iter: int | None = None) -> ActiveSetSolution:
    """Best weights on the probability simplex by a primal active-set loop.

    Starting from no pinned weights, the bordered KKT system is solved on the
    free indices.  Every free index with a negative weight is pinned to zero;
    once the free weights are non-negative, the pinned multipliers

        μ_i / 2 = K_{i,J} p_J + λ/2 - m_i

    are checked and the most negative one, if any, is released.  With this
    sign convention a KKT point has ``μ >= 0``: raising a pinned weight
    would not decrease the objective.

    Raises
    ------
    ActiveSetCycle
        No KKT point within ``max_iter`` (default ``10 n``) iterations.
    """
    m = np.asarray(m, dtype=float)
    n = sys.n
    K = sys.matrix + sys.jitter * np.eye(n)
    max_iter = 10 * n if max_iter is None else max_iter
    free = np.ones(n, dtype=bool)
    history = []
    p = np.zeros(n)
    for it in range(1, max_iter + 1):
        J = np.flatnonzero(free)
        pJ, lam_half = _bordered_subsystem(K[np.ix_(J, J)], m[J])
        p = np.zeros(n)
        p[J] = pJ
        history.append(tuple(np.flatnonzero(~free)))
        negative = pJ < -NEGATIVE_TOL
        if negative.any():
            free[J[negative]] = False
            continue
        Jc = np.flatnonzero(~free)
        mu = 2.0 * (K[np.ix_(Jc, J)] @ pJ + lam_half - m[Jc])
        if mu.size == 0 or mu.min() >= -DUAL_TOL:
            # round-off negatives above -NEGATIVE_TOL are treated as zero
            p = np.maximum(p, 0.0)
            p /= p.sum()
            quant = Quantization(sys.points, p, WeightKind.SIMPLEX)
            return ActiveSetSolution(quant, tuple(int(j) for j in Jc), mu, 2.0 * lam_half,
                                     it, history)
        free[Jc[np.argmin(mu)]] = True
    raise ActiveSetCycle(f"active set did not settle within {max_iter} iterations",
                         last_iterate=p, active_set=tuple(np.flatnonzero(~free)))


def _bordered_subsystem(K, m):
    c, lower = sla.cho_factor(K, lower=True, check_finite=False)
    w = sla.cho_solve((c, lower), np.column_stack([m, np.ones_like(m)]), check_finite=False)
    lam_half = (w[:, 0].sum() - 1.0) / w[:, 1].sum()
    return w[:, 0] - lam_half * w[:, 1], lam_half


def project_simplex(mu) -> np.ndarray:
    """Euclidean projection onto ``{p : p >= 0, Σ p = 1}`` (sort and threshold).

    Vectors already on the simplex up to summation round-off are returned
    unchanged, which makes the projection exactly idempotent.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.min() >= 0.0 and abs(mu.sum() - 1.0) <= 2 * mu.size * np.finfo(float).eps:
        return mu.copy()
    u = np.sort(mu)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, mu.size + 1)
    rho = np.count_nonzero(u - css / k > 0)
    tau = css[rho - 1] / rho
    p = np.maximum(mu - tau, 0.0)
    # a large threshold leaves a sum error of order |τ|·eps; rescaling removes it
    return p / p.sum()


def mmd_sq(sys: KernelSystem, m, self_energy: float, p) -> float:
    """Squared MMD of explicit weights ``p``."""
    p = np.asarray(p, dtype=float)
    return float(self_energy - 2.0 * p @ np.asarray(m, dtype=float) + p @ sys.matrix @ p)


def optimal_mmd_sq_signed(sys: KernelSystem, m, self_energy: float) -> float:
    """``E k(ξ,ξ') - mᵀK⁻¹m``, the optimum over unrestricted weights."""
    m = np.asarray(m, dtype=float)
    return float(self_energy - m @ solve(sys, m))


def probability_penalty(sys: KernelSystem, m) -> float:
    """Extra squared MMD paid for forcing the weights to sum to one."""
    w = solve(sys, np.column_stack([np.asarray(m, dtype=float), np.ones(sys.n)]))
    return float((w[:, 0].sum() - 1.0) ** 2 / w[:, 1].sum())


def optimal_mmd_sq_probability(sys: KernelSystem, m, self_energy: float) -> float:
    """Optimum over weights summing to one:

        E k(ξ,ξ') - mᵀK⁻¹m + (1ᵀK⁻¹m - 1)² / (1ᵀK⁻¹1)
    """
    m = np.asarray(m, dtype=float)
    w = solve(sys, np.column_stack([m, np.ones_like(m)]))
    return float(self_energy - m @ w[:, 0] + (w[:, 0].sum() - 1.0) ** 2 / w[:, 1].sum())
