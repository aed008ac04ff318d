"""
Sample-wise cost functions whose expectation under ξ, ξ' iid ~ P is the
squared MMD of the optimally weighted quantization.

With ``a = k(ξ, x)``, ``b = k(ξ', x)``, ``u = K⁻¹1`` and ``s = 1ᵀK⁻¹1``:

    c   = k(ξ,ξ') - aᵀK⁻¹b + (1 - uᵀa)(1 - uᵀb) / s        (symmetric)
    c'  = k(ξ,ξ') - bᵀK⁻¹a + (1 - uᵀa)² / s                  (one solve)
    c'' = k(ξ,ξ') - pᵀa - pᵀb + pᵀKp                         (explicit weights)

``E c`` is the sum-to-one optimum and ``E c''`` the squared MMD of the
weights ``p``.  With ``α = 1 - uᵀa`` the asymmetric form carries the extra
``E c' - E c = Var(α) / s``, because ``E α² = (E α)² + Var(α)`` while
``E αβ = (E α)²``.

Samples may be scalars or equal-length arrays; array samples return one
value (or one gradient column) per pair.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .kernel import KernelSpec, gram_grad
from .linalg import KernelSystem, build_system, solve

__all__ = [
    "CostSample", "cost_c", "cost_c_prime", "cost_c_double_prime", "grad_points_c",
    "grad_points_c_prime", "cost_and_grad", "grad_c_double_prime",
    "penalized_objective", "penalized_subgradient", "simplex_distance", "monte_carlo_mean",
]

# distances below this are round-off from updates that stay on the simplex
SIMPLEX_DIST_TOL = 1e-12


class CostSample(NamedTuple):
    """A pair (ξ, ξ') drawn from P ⊗ P."""

    xi: float
    xi_prime: float


class _Terms:
    """Shared quantities of c and c' for one point set and a batch of pairs."""

    def __init__(self, spec, points, sample, system=None, need_grad=False):
        sys = system if system is not None else build_system(spec, points)
        x = sys.points
        xi = np.atleast_1d(np.asarray(sample.xi, dtype=float))
        xj = np.atleast_1d(np.asarray(sample.xi_prime, dtype=float))
        self.scalar = np.ndim(sample.xi) == 0 and np.ndim(sample.xi_prime) == 0
        N = xi.size
        both = np.concatenate([xi, xj])
        if need_grad:
            values, grads = spec.value_and_grad_x(x[:, None], both[None, :])
            self.Ad, self.Bd = grads[:, :N], grads[:, N:]
            self.D = gram_grad(spec, x)
        else:
            values = spec.eval(x[:, None], both[None, :])
        A, B = values[:, :N], values[:, N:]
        self.kpair = spec.profile(xi - xj)
        W = solve(sys, np.hstack([values, np.ones((x.size, 1))]))
        self.A, self.B = A, B
        self.Wa, self.Wb, self.u = W[:, :N], W[:, N:-1], W[:, -1]
        self.s = self.u.sum()
        self.alpha = 1.0 - self.u @ A
        self.beta = 1.0 - self.u @ B

    def out(self, v):
        return v[..., 0] if self.scalar else v

    def c(self):
        # averaging aᵀK⁻¹b and bᵀK⁻¹a makes the swap symmetry exact in floating point
        quad = 0.5 * (np.sum(self.A * self.Wb, axis=0) + np.sum(self.B * self.Wa, axis=0))
        return self.kpair - quad + self.alpha * self.beta / self.s

    def c_prime(self):
        return self.kpair - np.sum(self.B * self.Wa, axis=0) + self.alpha**2 / self.s

    def grad_parts(self):
        D, u = self.D, self.u[:, None]
        DWa, DWb, Du = D @ self.Wa, D @ self.Wb, D @ u
        d_quad = self.Ad * self.Wb + self.Bd * self.Wa - (self.Wa * DWb + DWa * self.Wb)
        d_alpha = -(self.Ad * u - (u * DWa + Du * self.Wa))
        d_beta = -(self.Bd * u - (u * DWb + Du * self.Wb))
        d_s = -2.0 * u * Du
        return d_quad, d_alpha, d_beta, d_s

    def grad_c(self):
        d_quad, d_alpha, d_beta, d_s = self.grad_parts()
        a, b, s = self.alpha, self.beta, self.s
        return -d_quad + (d_alpha * b + a * d_beta) / s - a * b * d_s / s**2

    def grad_c_prime(self):
        d_quad, d_alpha, _, d_s = self.grad_parts()
        a, s = self.alpha, self.s
        return -d_quad + 2.0 * a * d_alpha / s - a * a * d_s / s**2


def cost_c(spec: KernelSpec, points, s: CostSample, system: KernelSystem | None = None):
    """Symmetric cost ``c(x, ξ, ξ')``."""
    t = _Terms(spec, points, s, system)
    return t.out(t.c())


def cost_c_prime(spec: KernelSpec, points, s: CostSample, system: KernelSystem | None = None):
    """Asymmetric cost ``c'(x, ξ, ξ')``.

    Its expectation exceeds that of :func:`cost_c` by ``Var(α) / s``; see the
    module docstring.
    """
    t = _Terms(spec, points, s, system)
    return t.out(t.c_prime())


def grad_points_c(spec: KernelSpec, points, s: CostSample, system: KernelSystem | None = None):
    """Gradient of :func:`cost_c` with respect to the support points.

    Differentiates through ``K(x)⁻¹`` via ``d(K⁻¹) = -K⁻¹ dK K⁻¹``.
    """
    t = _Terms(spec, points, s, system, need_grad=True)
    return t.out(t.grad_c())


def grad_points_c_prime(spec: KernelSpec, points, s: CostSample,
                        system: KernelSystem | None = None):
    t = _Terms(spec, points, s, system, need_grad=True)
    return t.out(t.grad_c_prime())


def cost_and_grad(spec: KernelSpec, points, s: CostSample, variant: str = "c",
                  system: KernelSystem | None = None):
    """Cost and point gradient from a single factorization."""
    t = _Terms(spec, points, s, system, need_grad=True)
    if variant == "c":
        return t.out(t.c()), t.out(t.grad_c())
    if variant == "c_prime":
        return t.out(t.c_prime()), t.out(t.grad_c_prime())
    raise ValueError(f"unknown cost variant {variant!r}")


def cost_c_double_prime(spec: KernelSpec, points, mu, s: CostSample):
    """``k(ξ,ξ') - μᵀk(x,ξ) - μᵀk(x,ξ') + μᵀK(x)μ`` for explicit weights μ."""
    x = np.asarray(points, dtype=float)
    mu = np.asarray(mu, dtype=float)
    K = spec.eval(x[:, None], x[None, :])
    a = spec.eval(np.asarray(s.xi, dtype=float)[..., None], x) @ mu
    b = spec.eval(np.asarray(s.xi_prime, dtype=float)[..., None], x) @ mu
    return spec.eval(s.xi, s.xi_prime) - a - b + mu @ K @ mu


def grad_c_double_prime(spec: KernelSpec, points, mu, s: CostSample):
    """Gradients of :func:`cost_c_double_prime` in the points and in μ (scalar sample)."""
    x = np.asarray(points, dtype=float)
    mu = np.asarray(mu, dtype=float)
    K = spec.eval(x[:, None], x[None, :])
    a = spec.eval(x, s.xi)
    b = spec.eval(x, s.xi_prime)
    ad = spec.eval_grad_x(x, s.xi)
    bd = spec.eval_grad_x(x, s.xi_prime)
    Kmu = K @ mu
    g_points = -mu * (ad + bd) + 2.0 * mu * (gram_grad(spec, x) @ mu)
    g_mu = -a - b + 2.0 * Kmu
    return g_points, g_mu


def simplex_distance(mu) -> float:
    """``‖μ - π(μ)‖``, reported as 0 below ``SIMPLEX_DIST_TOL``."""
    from .weights import project_simplex

    mu = np.asarray(mu, dtype=float)
    dist = float(np.linalg.norm(mu - project_simplex(mu)))
    return dist if dist > SIMPLEX_DIST_TOL else 0.0


def penalized_objective(spec: KernelSpec, points, mu, s: CostSample):
    """``c''(x, π(μ), ξ, ξ') + ‖μ - π(μ)‖`` with π the simplex projection."""
    from .weights import project_simplex

    p = project_simplex(mu)
    return cost_c_double_prime(spec, points, p, s) + simplex_distance(mu)


def penalized_subgradient(spec: KernelSpec, points, mu, s: CostSample):
    """A subgradient of :func:`penalized_objective` in the points and in μ.

    The projection is piecewise affine: on its support ``S`` its Jacobian is
    ``I - 11ᵀ/|S|`` and it vanishes elsewhere.  The distance term contributes
    ``(μ - π(μ)) / ‖μ - π(μ)‖`` off the simplex and 0 on it.
    """
    from .weights import project_simplex

    mu = np.asarray(mu, dtype=float)
    p = project_simplex(mu)
    g_points, g_p = grad_c_double_prime(spec, points, p, s)
    support = p > 0
    g_mu = np.zeros_like(mu)
    g_mu[support] = g_p[support] - g_p[support].mean()
    dist = simplex_distance(mu)
    if dist > 0.0:
        g_mu += (mu - p) / dist
    return g_points, g_mu


def monte_carlo_mean(fn, target, rng, size: int, chunk: int = 1 << 16):
    """Mean and standard error of ``fn(CostSample)`` over ``size`` iid pairs.

    ``fn`` receives array-valued samples of up to ``chunk`` pairs.
    """
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < size:
        k = min(chunk, size - done)
        xi = target.sample(rng, k)
        xj = target.sample(rng, k)
        v = np.asarray(fn(CostSample(xi, xj)), dtype=float)
        total += float(v.sum())
        total_sq += float((v * v).sum())
        done += k
    mean = total / size
    var = max(total_sq / size - mean * mean, 0.0) * size / (size - 1)
    return mean, float(np.sqrt(var / size))
