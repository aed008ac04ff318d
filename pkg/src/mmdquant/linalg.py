"""Cholesky-factored kernel systems and the bordered (sum-to-one) solve."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import DegeneratePoints, IllConditioned
from .kernel import KernelSpec, gram

__all__ = ["KernelSystem", "build_system", "factor_matrix", "solve", "solve_bordered",
           "check_distinct"]

JITTER_LEVELS = (0.0,) + tuple(10.0 ** e for e in range(-12, -5))


@dataclass(frozen=True)
class KernelSystem:
    """Kernel matrix ``K(x)`` of a point set together with its Cholesky factor.

    ``chol`` is the lower factor of ``K + jitter * I``.
    """

    points: np.ndarray
    matrix: np.ndarray
    chol: np.ndarray
    jitter: float
    log_det: float

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def solve(self, rhs):
        return solve(self, rhs)

    def ones_solution(self) -> np.ndarray:
        """``K⁻¹ 1``."""
        return solve(self, np.ones(self.n))


def check_distinct(points) -> np.ndarray:
    x = np.asarray(points, dtype=float).ravel()
    if x.size == 0:
        raise DegeneratePoints("at least one support point is required")
    if x.size > 1 and np.min(np.diff(np.sort(x))) <= 0.0:
        raise DegeneratePoints("support points must be pairwise distinct")
    return x


def build_system(spec: KernelSpec, points) -> KernelSystem:
    """Evaluate and factorize the kernel matrix at ``points``.

    Raises
    ------
    DegeneratePoints
        Two support points coincide.
    IllConditioned
        Cholesky fails even with jitter ``1e-6 * max(diag K)``.
    """
    x = check_distinct(points)
    return factor_matrix(gram(spec, x), x)


def factor_matrix(K, points) -> KernelSystem:
    """Factorize a precomputed symmetric kernel matrix with escalating jitter."""
    K = np.asarray(K, dtype=float)
    scale = float(np.max(np.diag(K)))
    eye = np.eye(K.shape[0])
    for level in JITTER_LEVELS:
        jitter = level * scale
        try:
            L = np.linalg.cholesky(K + jitter * eye if jitter else K)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(L)) or np.min(np.diag(L)) <= 0.0:
            continue
        log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
        return KernelSystem(np.asarray(points, dtype=float), K, L, jitter, log_det)
    raise IllConditioned(
        f"kernel matrix not positive definite with jitter up to 1e-6 * {scale:.3g}")


def solve(sys: KernelSystem, rhs) -> np.ndarray:
    """Solve ``(K + jitter I) w = rhs``; ``rhs`` may carry extra columns."""
    return sla.cho_solve((sys.chol, True), np.asarray(rhs, dtype=float), check_finite=False)


def solve_bordered(sys: KernelSystem, m) -> tuple[np.ndarray, float]:
    """Solve ``K p + (λ/2) 1 = m`` together with ``1ᵀ p = 1``.

    Uses the Schur complement ``1ᵀ K⁻¹ 1`` of the bordered matrix, so only the
    existing factorization is needed.

    Returns
    -------
    p : ndarray
        Weights summing to one.
    lambda_half : float
        Half the Lagrange multiplier of the sum constraint.
    """
    m = np.asarray(m, dtype=float)
    w = solve(sys, np.column_stack([m, np.ones_like(m)]))
    Kinv_m, Kinv_1 = w[:, 0], w[:, 1]
    lambda_half = (Kinv_m.sum() - 1.0) / Kinv_1.sum()
    p = Kinv_m - lambda_half * Kinv_1
    # absorb round-off so the constraint holds to machine precision
    p += (1.0 - p.sum()) * Kinv_1 / Kinv_1.sum()
    return p, float(lambda_half)
