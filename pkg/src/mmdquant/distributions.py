"""
Benchmark target distributions on the real line.

Each target is samplable from a seeded ``numpy.random.Generator``, has a
quantile function, and exposes its kernel embedding

    P_k(x) = E k(ξ, x),   ξ ~ P

and self energy ``E k(ξ, ξ')`` (ξ, ξ' iid) in closed form for the
kernel/target pairs where the integrals are elementary.  Other pairs fall
back to seeded Monte Carlo.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import special

from .cost import CostSample
from .errors import DomainError
from .kernel import KernelSpec

__all__ = ["TargetDistribution", "Normal", "Uniform", "Exponential", "parse_target",
           "MC_SIZE", "embedding", "self_energy", "derive_seed"]

MC_SIZE = 10**6
_CHUNK = 1 << 16
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def derive_seed(base_seed: int, run_index: int) -> int:
    """Per-run seed for independent parallel streams."""
    return int(base_seed) ^ int(run_index)


class TargetDistribution:
    """Interface shared by the benchmark targets."""

    family: str

    def params(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def label(self) -> str:
        return f"{self.family}:" + ",".join(f"{v:g}" for v in self.params().values())

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def sample_pair(self, rng: np.random.Generator) -> CostSample:
        """Two independent draws ξ, ξ'."""
        xi, xi_prime = self.sample(rng, 2)
        return CostSample(float(xi), float(xi_prime))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if not np.all((u > 0.0) & (u < 1.0)):
            raise DomainError("quantile levels must lie strictly inside (0, 1)")
        return self._ppf(u)

    def _ppf(self, u):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def quantile_points(self, n: int) -> np.ndarray:
        """Quantiles at levels (i - 1/2)/n, the default initialization."""
        return self.quantile((np.arange(n) + 0.5) / n)

    def analytic_embedding(self, spec: KernelSpec, x):
        """Closed-form ``E k(ξ, x)`` or ``None`` if not available."""
        return None

    def analytic_self_energy(self, spec: KernelSpec):
        """Closed-form ``E k(ξ, ξ')`` or ``None`` if not available."""
        return None


@dataclass(frozen=True)
class Normal(TargetDistribution):
    mean: float = 0.0
    std: float = 1.0
    family = "normal"

    def __post_init__(self):
        if not self.std > 0:
            raise DomainError("normal std must be positive")

    def sample(self, rng, size=None):
        return rng.normal(self.mean, self.std, size)

    def _ppf(self, u):
        return self.mean + self.std * special.ndtri(u)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (_SQRT_2PI * self.std)

    def analytic_embedding(self, spec, x):
        if not spec.is_gaussian:
            return None
        s2 = self.std**2 + spec.ell**2
        d = np.asarray(x, dtype=float) - self.mean
        return np.exp(-0.5 * d * d / s2) / math.sqrt(2.0 * math.pi * s2)

    def analytic_self_energy(self, spec):
        if not spec.is_gaussian:
            return None
        return 1.0 / math.sqrt(2.0 * math.pi * (2.0 * self.std**2 + spec.ell**2))


@dataclass(frozen=True)
class Uniform(TargetDistribution):
    lo: float = 0.0
    hi: float = 1.0
    family = "uniform"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError("uniform bounds need lo < hi")

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def _ppf(self, u):
        return self.lo + (self.hi - self.lo) * u

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def analytic_embedding(self, spec, x):
        x = np.asarray(x, dtype=float)
        width = self.hi - self.lo
        ell = spec.ell
        if spec.is_gaussian:
            cdf = lambda t: special.ndtr(t / ell)
        elif spec.nu in _HALF_INTEGER_ORDERS:
            cdf = lambda t: _matern_cdf(t, spec)
        else:
            return None
        # the kernel is symmetric, so reflect to keep both cdf arguments
        # non-positive and avoid cancellation in the tails
        left = x < 0.5 * (self.lo + self.hi)
        upper = np.where(left, x - self.lo, self.hi - x)
        lower = np.where(left, x - self.hi, self.lo - x)
        return (cdf(upper) - cdf(lower)) / width

    def analytic_self_energy(self, spec):
        L, ell = self.hi - self.lo, spec.ell
        if spec.is_gaussian:
            r = L / ell
            return 2.0 / L**2 * (L * (special.ndtr(r) - 0.5)
                                 + ell / _SQRT_2PI * math.expm1(-0.5 * r * r))
        if spec.nu in _HALF_INTEGER_ORDERS:
            return (L - 2.0 * _matern_tail_integral(L, spec)) / L**2
        return None


@dataclass(frozen=True)
class Exponential(TargetDistribution):
    rate: float = 1.0
    family = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("exponential rate must be positive")

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def _ppf(self, u):
        return -np.log1p(-u) / self.rate

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(over="ignore"):
            return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def analytic_embedding(self, spec, x):
        x = np.asarray(x, dtype=float)
        r, ell = self.rate, spec.ell
        if spec.is_gaussian:
            return r * np.exp(-r * x + 0.5 * (r * ell) ** 2 + special.log_ndtr((x - r * ell**2) / ell))
        if spec.nu != 0.5:
            return None
        left = r * np.exp(np.minimum(x, 0.0) / ell) / (2.0 * (r * ell + 1.0))
        xp = np.maximum(x, 0.0)
        a = 1.0 / ell - r
        # (e^{-r x} - e^{-x/ℓ}) / a, continuous through a = 0
        gap = xp if a == 0.0 else -np.expm1(-a * xp) / a
        right = r * np.exp(-r * xp) * (0.5 / (r * ell + 1.0) + gap / (2.0 * ell))
        return np.where(x <= 0.0, left, right)

    def analytic_self_energy(self, spec):
        r, ell = self.rate, spec.ell
        if spec.is_gaussian:
            return r * math.exp(0.5 * (r * ell) ** 2 + special.log_ndtr(-r * ell))
        if spec.nu == 0.5:
            return r / (2.0 * (r * ell + 1.0))
        return None


# Half-integer Matérn kernels are e^{-z} times a polynomial in z = √(2ν)|d|/ℓ,
# so their tail mass T(d) = ∫_d^∞ k and its integral are elementary.
_HALF_INTEGER_ORDERS = (0.5, 1.5, 2.5)


def _matern_tail(d, spec):
    z = math.sqrt(2.0 * spec.nu) * d / spec.ell
    if spec.nu == 0.5:
        return 0.5 * np.exp(-z)
    if spec.nu == 1.5:
        return 0.25 * (2.0 + z) * np.exp(-z)
    return (8.0 + z * (5.0 + z)) * np.exp(-z) / 16.0


def _matern_cdf(t, spec):
    t = np.asarray(t, dtype=float)
    tail = _matern_tail(np.abs(t), spec)
    return np.where(t < 0, tail, 1.0 - tail)


def _matern_tail_integral(L, spec):
    """``∫_0^L T(d) dd`` for the tail mass ``T`` of a half-integer Matérn kernel."""
    a = math.sqrt(2.0 * spec.nu)
    z = a * L / spec.ell
    e, q = math.exp(-z), -math.expm1(-z)
    if spec.nu == 0.5:
        return spec.ell * q / 2.0
    if spec.nu == 1.5:
        return spec.ell / (4.0 * a) * (3.0 * q - z * e)
    return spec.ell / (16.0 * a) * (15.0 * q - z * (7.0 + z) * e)


def embedding(target: TargetDistribution, spec: KernelSpec, x, rng=None, size: int = MC_SIZE):
    """``E k(ξ, x)`` at the points ``x``.

    Returns ``(values, exact)`` where ``exact`` is False when the values are a
    Monte-Carlo estimate from ``size`` draws of ``rng`` (seed 0 if omitted).
    """
    values = target.analytic_embedding(spec, x)
    if values is not None:
        return np.asarray(values, dtype=float), True
    rng = np.random.default_rng(0) if rng is None else rng
    x = np.atleast_1d(np.asarray(x, dtype=float))
    total = np.zeros_like(x)
    done = 0
    while done < size:
        xi = target.sample(rng, min(_CHUNK, size - done))
        total += spec.eval(x[:, None], xi[None, :]).sum(axis=1)
        done += xi.size
    return total / size, False


def self_energy(target: TargetDistribution, spec: KernelSpec, rng=None, size: int = MC_SIZE):
    """``E k(ξ, ξ')`` as ``(value, exact)``; Monte Carlo over ``size`` pairs if needed."""
    value = target.analytic_self_energy(spec)
    if value is not None:
        return float(value), True
    rng = np.random.default_rng(0) if rng is None else rng
    total = 0.0
    done = 0
    while done < size:
        k = min(_CHUNK, size - done)
        total += float(spec.eval(target.sample(rng, k), target.sample(rng, k)).sum())
        done += k
    return total / size, False


_FAMILIES = {"normal": Normal, "uniform": Uniform, "exponential": Exponential}


def parse_target(text: str) -> TargetDistribution:
    """Parse ``family[:p1,p2]``, e.g. ``normal:0,1`` or ``exponential:2``."""
    name, _, rest = text.strip().partition(":")
    cls = _FAMILIES.get(name.lower())
    if cls is None:
        raise DomainError(f"unknown target family {name!r}; choose from {sorted(_FAMILIES)}")
    try:
        args = [float(v) for v in rest.split(",")] if rest else []
        return cls(*args)
    except TypeError as exc:
        raise DomainError(f"bad parameters for {name}: {rest!r}") from exc
    except ValueError as exc:
        raise DomainError(str(exc)) from exc
