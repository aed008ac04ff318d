"""
Stochastic gradient descent on the support points.

Each step draws an independent pair (ξ, ξ') from the target, takes one
gradient step on the sample cost with step size ``lr_scale / (lr_offset + t)``
and updates two running averages: the squared MMD (mean of the sample costs)
and the embedding vector ``m`` (mean of ``(k(ξ, x) + k(ξ', x)) / 2``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cost import (CostSample, cost_and_grad, penalized_objective, penalized_subgradient,
                   simplex_distance)
from .distributions import TargetDistribution, embedding
from .errors import IllConditioned, NumericalAbort
from .kernel import KernelSpec
from .linalg import build_system, check_distinct
from .weights import Quantization, WeightKind, project_simplex, sum_to_one_weights

__all__ = ["SgdConfig", "SgdState", "IterationTrace", "SgdResult", "PenalizedResult",
           "learning_rate", "sgd_quantize", "sgd_quantize_penalized"]

log = logging.getLogger(__name__)

COLLISION_GAP = 1e-9
_BLOCK = 4096


@dataclass(frozen=True)
class SgdConfig:
    n_points: int
    max_iters: int = 100_000
    lr_offset: float = 100.0
    lr_scale: float = 1.0
    seed: int = 0
    cost_variant: str = "c"
    stop_window: int = 1000
    stop_rel_tol: float = 1e-4
    trace_stride: int = 100

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not (self.lr_offset > 0 and self.lr_scale > 0):
            raise ValueError("learning-rate constants must be positive")
        if self.cost_variant not in ("c", "c_prime"):
            raise ValueError(f"unknown cost variant {self.cost_variant!r}")
        if self.stop_window < 1 or self.trace_stride < 1:
            raise ValueError("stop_window and trace_stride must be positive")


def learning_rate(cfg: SgdConfig, t: int) -> float:
    return cfg.lr_scale / (cfg.lr_offset + t)


@dataclass
class SgdState:
    points: np.ndarray
    iter: int
    running_mmd_sq: float
    running_m: np.ndarray
    rng: np.random.Generator


@dataclass
class IterationTrace:
    """Subsampled history; ``costs`` keeps every sample cost."""

    t: list = field(default_factory=list)
    running: list = field(default_factory=list)
    points: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    penalty: list = field(default_factory=list)

    def record(self, t, running, points, penalty=None):
        self.t.append(t)
        self.running.append(running)
        self.points.append(np.array(points))
        if penalty is not None:
            self.penalty.append(penalty)


@dataclass
class SgdResult:
    quantization: Quantization
    running_mmd_sq: float
    trace: IterationTrace
    state: SgdState
    m: np.ndarray
    m_exact: bool
    nudges: int = 0
    stopped_early: bool = False

    @property
    def mmd_estimate(self) -> float:
        """Square root of the running squared-MMD average."""
        return math.sqrt(max(self.running_mmd_sq, 0.0))


@dataclass
class PenalizedResult:
    quantization: Quantization
    mu: np.ndarray
    running_objective: float
    trace: IterationTrace
    max_penalty: float = 0.0
    nudges: int = 0


class _PairStream:
    """Pairs drawn in fixed-size blocks so the stream depends only on the seed."""

    def __init__(self, target, rng):
        self.target, self.rng = target, rng
        self.buf, self.pos = None, _BLOCK

    def next(self):
        if self.pos == _BLOCK:
            self.buf = self.target.sample(self.rng, (_BLOCK, 2))
            self.pos = 0
        xi, xj = self.buf[self.pos]
        self.pos += 1
        return CostSample(float(xi), float(xj))


def _separate(x, nudge):
    """Push apart points closer than COLLISION_GAP; returns (points, count)."""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    count = 0
    for i in range(1, xs.size):
        if xs[i] - xs[i - 1] < COLLISION_GAP:
            xs[i] = xs[i - 1] + nudge
            count += 1
    if count:
        x = x.copy()
        x[order] = xs
    return x, count


def _initial_points(target, n, init):
    if init is None:
        return np.asarray(target.quantile_points(n), dtype=float)
    x = check_distinct(init).copy()
    if x.size != n:
        raise ValueError(f"expected {n} initial points, got {x.size}")
    return x


def sgd_quantize(spec: KernelSpec, target: TargetDistribution, cfg: SgdConfig,
                 init=None) -> SgdResult:
    """Optimize support-point locations by single-pair stochastic gradients.

    Final weights are the sum-to-one optimum at the final points, with the
    embedding recomputed there (analytically if possible, else from a fresh
    Monte-Carlo sample) rather than taken from the running average, which
    mixes kernel values at stale point positions.

    Raises
    ------
    NumericalAbort
        The kernel matrix became singular or the gradient non-finite.  The
        exception carries the last state and the trace so far.
    """
    x = _initial_points(target, cfg.n_points, init)
    rng = np.random.default_rng(cfg.seed)
    stream = _PairStream(target, rng)
    state = SgdState(x, 0, 0.0, np.zeros_like(x), rng)
    trace = IterationTrace()
    nudge = 1e-6 * spec.ell
    nudges = 0
    stopped = False
    checkpoint = None
    trace.record(0, math.nan, x)
    for t in range(cfg.max_iters):
        s = stream.next()
        try:
            system = build_system(spec, x)
        except IllConditioned as exc:
            raise NumericalAbort(str(exc), state=state, trace=trace) from exc
        cost, grad = cost_and_grad(spec, x, s, cfg.cost_variant, system)
        if not (np.isfinite(cost) and np.all(np.isfinite(grad))):
            raise NumericalAbort(f"non-finite cost or gradient at t={t}", state=state, trace=trace)
        running = (t * state.running_mmd_sq + cost) / (t + 1)
        trace.costs.append(float(cost))
        x = x - learning_rate(cfg, t) * grad
        x, hit = _separate(x, nudge)
        if hit:
            nudges += hit
            log.warning("support points collided at t=%d; nudged %d apart", t, hit)
        m_sample = 0.5 * (spec.eval(s.xi, x) + spec.eval(s.xi_prime, x))
        state.running_m = (t * state.running_m + m_sample) / (t + 1)
        state.points, state.iter, state.running_mmd_sq = x, t + 1, float(running)
        if state.iter % cfg.trace_stride == 0:
            trace.record(state.iter, state.running_mmd_sq, x)
        if state.iter % cfg.stop_window == 0:
            if checkpoint is not None and abs(running - checkpoint) <= cfg.stop_rel_tol * abs(running):
                stopped = True
                break
            checkpoint = running
    if trace.t[-1] != state.iter:
        trace.record(state.iter, state.running_mmd_sq, x)

    m, exact = embedding(target, spec, x, rng=np.random.default_rng([cfg.seed, 1]))
    try:
        quant = sum_to_one_weights(build_system(spec, x), m)
    except IllConditioned as exc:
        raise NumericalAbort(str(exc), state=state, trace=trace) from exc
    running = state.running_mmd_sq if state.iter else math.nan
    return SgdResult(quant, running, trace, state, np.asarray(m), exact, nudges, stopped)


def sgd_quantize_penalized(spec: KernelSpec, target: TargetDistribution, cfg: SgdConfig,
                           init_points=None, init_mu=None) -> PenalizedResult:
    """Joint stochastic descent on points and weights.

    Minimizes ``E c''(x, π(μ), ξ, ξ') + ‖μ - π(μ)‖`` over ``(x, μ)`` where π
    is the Euclidean projection onto the probability simplex; the returned
    weights are ``π(μ)``.  No linear solves are involved.
    """
    x = _initial_points(target, cfg.n_points, init_points)
    mu = (np.full(cfg.n_points, 1.0 / cfg.n_points) if init_mu is None
          else np.asarray(init_mu, dtype=float).copy())
    if mu.shape != x.shape:
        raise ValueError("init_mu must have one entry per support point")
    stream = _PairStream(target, np.random.default_rng(cfg.seed))
    trace = IterationTrace()
    nudge = 1e-6 * spec.ell
    nudges = 0
    running = 0.0
    max_penalty = simplex_distance(mu)
    trace.record(0, math.nan, x, max_penalty)
    for t in range(cfg.max_iters):
        s = stream.next()
        value = float(penalized_objective(spec, x, mu, s))
        g_points, g_mu = penalized_subgradient(spec, x, mu, s)
        if not (np.isfinite(value) and np.all(np.isfinite(g_points))):
            raise NumericalAbort(f"non-finite objective at t={t}", trace=trace)
        running = (t * running + value) / (t + 1)
        trace.costs.append(value)
        eta = learning_rate(cfg, t)
        x = x - eta * g_points
        mu = mu - eta * g_mu
        x, hit = _separate(x, nudge)
        nudges += hit
        penalty = simplex_distance(mu)
        max_penalty = max(max_penalty, penalty)
        if (t + 1) % cfg.trace_stride == 0:
            trace.record(t + 1, running, x, penalty)
    if trace.t[-1] != cfg.max_iters:
        trace.record(cfg.max_iters, running, x, simplex_distance(mu))
    quant = Quantization(x, project_simplex(mu), WeightKind.SIMPLEX)
    running = running if cfg.max_iters else math.nan
    return PenalizedResult(quant, mu, running, trace, max_penalty, nudges)
