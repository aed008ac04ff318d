"""
Independent reference solvers and a quick invariant suite.

The reference solvers deliberately avoid the code paths they are used to
verify: they build explicit dense systems, enumerate subsets and use LU
instead of Cholesky.  They are exponential or cubic in ``n`` and meant for
small instances only.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .closedform import NormalTargetSpec, closed_mmd_sq_and_grad
from .cost import CostSample, cost_c, cost_c_prime, grad_points_c
from .distributions import Normal, Uniform, embedding, self_energy
from .kernel import KernelSpec, gram, unit_integral_check
from .linalg import build_system, solve_bordered
from .weights import (optimal_mmd_sq_probability, optimal_mmd_sq_signed, project_simplex,
                      simplex_weights)

__all__ = ["nullspace_qp", "enumerate_active_sets", "project_simplex_enum",
           "central_difference", "random_instance", "CheckResult", "run_invariant_suite"]


def nullspace_qp(K, m) -> np.ndarray:
    """Minimize ``pᵀKp - 2pᵀm`` subject to ``1ᵀp = 1`` by null-space elimination."""
    K = np.asarray(K, dtype=float)
    m = np.asarray(m, dtype=float)
    n = m.size
    p0 = np.full(n, 1.0 / n)
    if n == 1:
        return p0
    Z = sla.null_space(np.ones((1, n)))
    y = np.linalg.solve(Z.T @ K @ Z, Z.T @ (m - K @ p0))
    return p0 + Z @ y


def _bordered_lu(K, m):
    n = m.size
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = K
    A[:n, n] = A[n, :n] = 1.0
    sol = np.linalg.solve(A, np.append(m, 1.0))
    return sol[:n]


def enumerate_active_sets(K, m, tol: float = 1e-12):
    """Best simplex weights by trying every support set.

    Returns ``(p, objective)`` with objective ``pᵀKp - 2pᵀm``.
    """
    K = np.asarray(K, dtype=float)
    m = np.asarray(m, dtype=float)
    n = m.size
    best_p, best = None, math.inf
    for size in range(1, n + 1):
        for J in itertools.combinations(range(n), size):
            J = list(J)
            pJ = _bordered_lu(K[np.ix_(J, J)], m[J])
            if pJ.min() < -tol:
                continue
            p = np.zeros(n)
            p[J] = pJ
            obj = float(p @ K @ p - 2.0 * p @ m)
            if obj < best:
                best_p, best = p, obj
    return best_p, best


def project_simplex_enum(v) -> np.ndarray:
    """Simplex projection by checking the KKT conditions on every support set."""
    v = np.asarray(v, dtype=float)
    n = v.size
    best, best_d = None, math.inf
    for size in range(1, n + 1):
        for S in itertools.combinations(range(n), size):
            S = list(S)
            tau = (v[S].sum() - 1.0) / size
            p = np.zeros(n)
            p[S] = v[S] - tau
            if p[S].min() < 0.0:
                continue
            d = float(np.sum((v - p) ** 2))
            if d < best_d:
                best, best_d = p, d
    return best


def central_difference(f, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a vector."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def random_instance(rng, n, spec, lo=-3.0, hi=3.0, min_gap=0.05):
    """Sorted distinct points with a minimum gap, drawn uniformly from [lo, hi]."""
    while True:
        x = np.sort(rng.uniform(lo, hi, n))
        if n == 1 or np.min(np.diff(x)) >= min_gap:
            return x


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def run_invariant_suite(seed: int = 0) -> list[CheckResult]:
    """Fast self-checks of the main identities (a few seconds)."""
    rng = np.random.default_rng(seed)
    out = []

    def record(name, err, tol):
        out.append(CheckResult(name, bool(err <= tol), f"max error {err:.3e} (tol {tol:g})"))

    specs = [KernelSpec.gaussian(0.5), KernelSpec.matern(0.5, 0.5), KernelSpec.matern(0.5, 2.5)]
    record("kernel unit integral",
           max(abs(unit_integral_check(s) - 1.0) for s in specs), 1e-6)

    err_qp = err_pen = err_sum = 0.0
    for _ in range(20):
        spec = specs[rng.integers(len(specs))]
        x = random_instance(rng, int(rng.integers(2, 8)), spec)
        sys = build_system(spec, x)
        m, _ = embedding(Normal(), spec, x) if spec.is_gaussian else embedding(Uniform(-3, 3), spec, x)
        p, _ = solve_bordered(sys, m)
        err_qp = max(err_qp, float(np.max(np.abs(p - nullspace_qp(sys.matrix, m)))))
        err_sum = max(err_sum, abs(p.sum() - 1.0))
        w = np.linalg.solve(sys.matrix, np.column_stack([m, np.ones_like(m)]))
        gap = optimal_mmd_sq_probability(sys, m, 0.0) - optimal_mmd_sq_signed(sys, m, 0.0)
        err_pen = max(err_pen, abs(gap - (w[:, 0].sum() - 1.0) ** 2 / w[:, 1].sum()))
    record("sum-to-one weights vs null-space QP", err_qp, 1e-9)
    record("sum-to-one weights sum", err_sum, 1e-12)
    record("probability penalty identity", err_pen, 1e-10)

    err_as = 0.0
    for _ in range(10):
        n = int(rng.integers(3, 7))
        spec = KernelSpec.gaussian(float(rng.choice([0.3, 0.5, 1.0])))
        x = random_instance(rng, n, spec)
        K = gram(spec, x)
        m = K @ rng.normal(size=n)
        sol = simplex_weights(build_system(spec, x), m)
        p = sol.quantization.weights
        _, best = enumerate_active_sets(K, m)
        err_as = max(err_as, abs(float(p @ K @ p - 2.0 * p @ m) - best))
    record("active set vs enumeration", err_as, 1e-9)

    err_proj = 0.0
    for _ in range(100):
        v = rng.normal(size=5)
        err_proj = max(err_proj, float(np.max(np.abs(project_simplex(v) - project_simplex_enum(v)))))
    record("simplex projection vs enumeration", err_proj, 1e-12)

    spec = KernelSpec.gaussian(0.5)
    err_sym = err_fd = 0.0
    for _ in range(10):
        x = random_instance(rng, 4, spec, -2.0, 2.0, 0.2)
        a, b = rng.normal(size=2)
        err_sym = max(err_sym, abs(cost_c(spec, x, CostSample(a, b)) - cost_c(spec, x, CostSample(b, a))))
        g = grad_points_c(spec, x, CostSample(a, b))
        fd = central_difference(lambda y: cost_c(spec, y, CostSample(a, b)), x)
        err_fd = max(err_fd, float(np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)))
    record("cost symmetry under swapping the pair", err_sym, 0.0)
    record("cost gradient vs finite differences", err_fd, 1e-5)

    t = NormalTargetSpec(0.0, 1.0, 0.5)
    x = np.array([-1.3, -0.2, 0.4, 1.1])
    f, g = closed_mmd_sq_and_grad(t, x)
    fd = central_difference(lambda y: closed_mmd_sq_and_grad(t, y)[0], x, 1e-5)
    record("closed-form gradient vs finite differences",
           float(np.max(np.abs(g - fd)) / np.max(np.abs(fd))), 1e-7)
    sys = build_system(spec, x)
    m, _ = embedding(Normal(), spec, x)
    se, _ = self_energy(Normal(), spec)
    record("closed form vs generic MMD path", abs(f - optimal_mmd_sq_probability(sys, m, se)), 1e-12)

    x = np.array([-1.0, 0.0, 1.0])
    c_vs_cp = abs(cost_c(spec, x, CostSample(0.3, 0.3)) - cost_c_prime(spec, x, CostSample(0.3, 0.3)))
    record("c and c' coincide on the diagonal", c_vs_cp, 1e-14)
    return out
