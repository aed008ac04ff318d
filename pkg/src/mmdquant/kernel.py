"""
Translation-invariant kernels on the real line.

Both families are normalized probability densities in their second
argument, so that ``∫ k(x, y) dy = 1`` for every ``x``:

    Gaussian   k(x, y) = exp(-d²/(2ℓ²)) / sqrt(2πℓ²)
    Matérn     k(x, y) = c(ℓ, ν) · z^ν · K_ν(z),   z = sqrt(2ν)·d/ℓ

with ``d = |x - y|``, ``K_ν`` the modified Bessel function of the second
kind and ``c(ℓ, ν) = 2^-ν sqrt(2ν) / (ℓ sqrt(π) Γ(ν + 1/2))``.  ν = 1/2 is
the Laplace density with scale ℓ; ν → ∞ recovers the Gaussian.

All evaluators broadcast over numpy arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError

__all__ = ["Family", "KernelSpec", "gram", "gram_grad", "unit_integral_check"]

# Orders above this use the uniform (Debye) asymptotic expansion of K_ν.
_DEBYE_MIN_ORDER = 40.0

_LOG_PI = math.log(math.pi)


class Family(str, enum.Enum):
    GAUSSIAN = "gaussian"
    MATERN = "matern"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family with bandwidth ``ell`` and Matérn smoothness ``nu``.

    ``nu`` is ignored by the Gaussian family.  A Matérn spec with
    ``nu = inf`` evaluates exactly as the Gaussian of the same bandwidth.
    """

    family: Family
    ell: float
    nu: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (math.isfinite(self.ell) and self.ell > 0):
            raise DomainError(f"bandwidth must be positive and finite, got {self.ell!r}")
        if math.isnan(self.nu) or self.nu <= 0:
            raise DomainError(f"smoothness must be positive or inf, got {self.nu!r}")

    @classmethod
    def gaussian(cls, ell: float) -> "KernelSpec":
        return cls(Family.GAUSSIAN, float(ell))

    @classmethod
    def matern(cls, ell: float, nu: float) -> "KernelSpec":
        return cls(Family.MATERN, float(ell), float(nu))

    @property
    def is_gaussian(self) -> bool:
        """True when evaluation dispatches to the Gaussian formula."""
        return self.family is Family.GAUSSIAN or math.isinf(self.nu)

    @property
    def label(self) -> str:
        if self.family is Family.GAUSSIAN:
            return f"gaussian(ell={self.ell:g})"
        return f"matern(ell={self.ell:g}, nu={self.nu:g})"

    def peak(self) -> float:
        """k(x, x), the maximum value of the kernel."""
        if self.is_gaussian:
            return 1.0 / math.sqrt(2.0 * math.pi * self.ell**2)
        return _matern_at_zero(self.ell, self.nu)

    def profile(self, d):
        """Kernel as a function of the distance ``d >= 0``."""
        d = np.abs(np.asarray(d, dtype=float))
        if self.is_gaussian:
            return _gaussian(d, self.ell)
        return _matern(d, self.ell, self.nu)

    def profile_derivative(self, d):
        """Derivative of :meth:`profile` in ``d`` (zero at ``d = 0``)."""
        d = np.abs(np.asarray(d, dtype=float))
        if self.is_gaussian:
            return -d / self.ell**2 * _gaussian(d, self.ell)
        return _matern_derivative(d, self.ell, self.nu)

    def eval(self, x, y):
        """k(x, y); broadcasts over array arguments."""
        x, y = _finite(x), _finite(y)
        return self.profile(x - y)

    __call__ = eval

    def profile_pair(self, d):
        """``(profile(d), profile_derivative(d))`` sharing the exponentials."""
        d = np.abs(np.asarray(d, dtype=float))
        if self.is_gaussian:
            v = _gaussian(d, self.ell)
            return v, -d / self.ell**2 * v
        return _matern_pair(d, self.ell, self.nu)

    def value_and_grad_x(self, x, y):
        """``(k(x, y), ∂k(x, y)/∂x)`` in one pass."""
        diff = _finite(x) - _finite(y)
        v, dv = self.profile_pair(diff)
        return v, np.sign(diff) * dv

    def eval_grad_x(self, x, y):
        """Partial derivative of k(x, y) with respect to ``x``.

        At ``x == y`` the result is 0.  For Matérn ν <= 1/2 the kernel has a
        cusp there and 0 is the symmetric subgradient, not a derivative; see
        :meth:`at_cusp`.
        """
        x, y = _finite(x), _finite(y)
        diff = x - y
        return np.sign(diff) * self.profile_derivative(diff)

    def at_cusp(self, x, y):
        """True where :meth:`eval_grad_x` returned a subgradient."""
        if self.is_gaussian or self.nu > 0.5:
            return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape, dtype=bool)
        return np.asarray(x) == np.asarray(y)


def gram(spec: KernelSpec, x, y=None) -> np.ndarray:
    """Kernel matrix ``k(x_i, y_j)``; ``y`` defaults to ``x``."""
    x = np.asarray(x, dtype=float)
    y = x if y is None else np.asarray(y, dtype=float)
    return spec.eval(x[:, None], y[None, :])


def gram_grad(spec: KernelSpec, x) -> np.ndarray:
    """Matrix ``D[i, j] = ∂k(x_i, x_j)/∂x_i`` with a zero diagonal."""
    x = np.asarray(x, dtype=float)
    return spec.eval_grad_x(x[:, None], x[None, :])


def unit_integral_check(spec: KernelSpec, half_width: float | None = None) -> float:
    """Integrate ``y -> k(0, y)`` over ``[-T, T]`` with ``T = 40ℓ`` by default."""
    T = 40.0 * spec.ell if half_width is None else half_width
    f = lambda y: float(spec.eval(0.0, y))
    opts = dict(epsabs=1e-14, epsrel=1e-13, limit=500)
    # split at the peak so the Laplace cusp sits on an endpoint
    left, _ = integrate.quad(f, -T, 0.0, **opts)
    right, _ = integrate.quad(f, 0.0, T, **opts)
    return left + right


def _finite(v):
    v = np.asarray(v, dtype=float)
    if not np.isfinite(v).all():
        raise DomainError("kernel arguments must be finite")
    return v


def _gaussian(d, ell):
    return np.exp(-0.5 * (d / ell) ** 2) / math.sqrt(2.0 * math.pi * ell * ell)


def _log_matern_const(ell, nu):
    return (-nu * math.log(2.0) + 0.5 * math.log(2.0 * nu) - math.log(ell)
            - 0.5 * _LOG_PI - special.gammaln(nu + 0.5))


def _matern_at_zero(ell, nu):
    # limit of z^ν K_ν(z) as z -> 0 is 2^(ν-1) Γ(ν)
    return math.exp(0.5 * math.log(2.0 * nu) + special.gammaln(nu) - math.log(2.0 * ell)
                    - 0.5 * _LOG_PI - special.gammaln(nu + 0.5))


def _matern(d, ell, nu):
    if nu == 0.5:
        return np.exp(-d / ell) / (2.0 * ell)
    if nu == 1.5:
        z = math.sqrt(3.0) * d / ell
        return math.sqrt(3.0) / (4.0 * ell) * (1.0 + z) * np.exp(-z)
    if nu == 2.5:
        z = math.sqrt(5.0) * d / ell
        return math.sqrt(5.0) / (16.0 * ell) * (3.0 + z * (3.0 + z)) * np.exp(-z)
    return _matern_bessel(d, ell, nu)


def _matern_pair(d, ell, nu):
    if nu == 0.5:
        v = np.exp(-d / ell) / (2.0 * ell)
        return v, np.where(d > 0, -v / ell, 0.0)
    if nu == 1.5:
        z = math.sqrt(3.0) * d / ell
        e = np.exp(-z)
        return math.sqrt(3.0) / (4.0 * ell) * (1.0 + z) * e, -3.0 / (4.0 * ell * ell) * z * e
    if nu == 2.5:
        z = math.sqrt(5.0) * d / ell
        e = np.exp(-z)
        return (math.sqrt(5.0) / (16.0 * ell) * (3.0 + z * (3.0 + z)) * e,
                -5.0 / (16.0 * ell * ell) * z * (1.0 + z) * e)
    return _matern_bessel(d, ell, nu), _matern_bessel_derivative(d, ell, nu)


def _matern_derivative(d, ell, nu):
    if nu == 0.5:
        return -np.where(d > 0, np.exp(-d / ell) / (2.0 * ell * ell), 0.0)
    if nu == 1.5:
        z = math.sqrt(3.0) * d / ell
        return -3.0 / (4.0 * ell * ell) * z * np.exp(-z)
    if nu == 2.5:
        z = math.sqrt(5.0) * d / ell
        return -5.0 / (16.0 * ell * ell) * z * (1.0 + z) * np.exp(-z)
    return _matern_bessel_derivative(d, ell, nu)


def _matern_bessel(d, ell, nu):
    """General-ν Matérn through log-space Bessel evaluation."""
    d = np.asarray(d, dtype=float)
    z = math.sqrt(2.0 * nu) * d / ell
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.exp(_log_matern_const(ell, nu) + nu * np.log(z) + log_bessel_k(nu, z))
    peak = _matern_at_zero(ell, nu)
    # z^ν K_ν(z) overflows only where it is already at its z -> 0 limit
    return np.where((d > 0) & np.isfinite(out), out, peak)


def _matern_bessel_derivative(d, ell, nu):
    # d/dz [z^ν K_ν(z)] = -z^ν K_{ν-1}(z), and K_{-a} = K_a
    d = np.asarray(d, dtype=float)
    scale = math.sqrt(2.0 * nu) / ell
    z = scale * d
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = -np.exp(_log_matern_const(ell, nu) + math.log(scale) + nu * np.log(z)
                      + log_bessel_k(abs(nu - 1.0), z))
    return np.where((d > 0) & np.isfinite(out), out, 0.0)


def log_bessel_k(order: float, z):
    """log K_order(z) for z > 0, stable for large orders and arguments."""
    z = np.asarray(z, dtype=float)
    if order >= _DEBYE_MIN_ORDER:
        return _log_bessel_k_debye(order, z)
    with np.errstate(divide="ignore"):
        return np.log(special.kve(order, z)) - z


def _log_bessel_k_debye(nu, z):
    # uniform asymptotic expansion K_ν(νt) for large ν, four correction terms
    with np.errstate(divide="ignore", invalid="ignore"):
        t = z / nu
        s = np.sqrt(1.0 + t * t)
        eta = s + np.log(t / (1.0 + s))
        p = 1.0 / s
        p2 = p * p
        u1 = p * (3.0 - 5.0 * p2) / 24.0
        u2 = p2 * (81.0 - p2 * (462.0 - 385.0 * p2)) / 1152.0
        u3 = p * p2 * (30375.0 - p2 * (369603.0 - p2 * (765765.0 - 425425.0 * p2))) / 414720.0
        u4 = p2 * p2 * (4465125.0 - p2 * (94121676.0 - p2 * (349922430.0 - p2 * (
            446185740.0 - 185910725.0 * p2)))) / 39813120.0
        series = 1.0 - u1 / nu + u2 / nu**2 - u3 / nu**3 + u4 / nu**4
        return 0.5 * math.log(math.pi / (2.0 * nu)) - nu * eta - 0.5 * np.log(s) + np.log(series)
