import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmdquant.errors import DomainError
from mmdquant.kernel import KernelSpec, gram, gram_grad, log_bessel_k, unit_integral_check
from mmdquant.linalg import build_system


def matern_mp(d, ell, nu):
    """Matérn density from its defining Bessel formula, 40-digit arithmetic."""
    with mpmath.workdps(40):
        nu, ell, d = mpmath.mpf(nu), mpmath.mpf(ell), mpmath.mpf(d)
        z = mpmath.sqrt(2 * nu) * d / ell
        c = 2**-nu * mpmath.sqrt(2 * nu) / (ell * mpmath.sqrt(mpmath.pi) * mpmath.gamma(nu + 0.5))
        return float(c * z**nu * mpmath.besselk(nu, z))


SPECS = [
    KernelSpec.gaussian(0.1),
    KernelSpec.gaussian(0.5),
    KernelSpec.matern(0.5, 0.5),
    KernelSpec.matern(0.1, 0.5),
    KernelSpec.matern(0.5, 1.5),
    KernelSpec.matern(0.5, 2.5),
    KernelSpec.matern(0.7, 1.3),
    KernelSpec.matern(0.3, 7.25),
]


class TestEval:
    def test_gaussian_peak(self):
        np.testing.assert_allclose(KernelSpec.gaussian(0.1).eval(1.0, 1.0), 3.9894228040143268,
                                   rtol=1e-15)

    def test_laplace_value(self):
        assert KernelSpec.matern(1.0, 0.5).eval(0.0, 2.0) == pytest.approx(math.exp(-2) / 2,
                                                                          rel=1e-15)

    def test_matern_25_against_bessel_oracle(self):
        value = KernelSpec.matern(0.5, 2.5).eval(0.0, 0.3)
        np.testing.assert_allclose(value, matern_mp(0.3, 0.5, 2.5), rtol=1e-12)

    @pytest.mark.parametrize("nu", [0.3, 0.5, 1.3, 1.5, 2.5, 4.0, 7.25, 39.0, 45.0, 120.0])
    @pytest.mark.parametrize("ell", [0.1, 0.5, 2.0])
    def test_general_order_against_bessel_oracle(self, nu, ell):
        spec = KernelSpec.matern(ell, nu)
        d = ell * np.array([1e-3, 0.05, 0.4, 1.0, 2.5, 6.0])
        expected = [matern_mp(v, ell, nu) for v in d]
        # the Debye expansion used for large orders is accurate to about 1e-10
        rtol = 1e-12 if nu < 40 else 1e-9
        np.testing.assert_allclose(spec.profile(d), expected, rtol=rtol)

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5, 3.7, 80.0])
    def test_value_at_zero_is_the_limit(self, nu):
        spec = KernelSpec.matern(0.4, nu)
        limit = math.sqrt(2 * nu) * math.gamma(nu) / (2 * 0.4 * math.sqrt(math.pi)
                                                       * math.gamma(nu + 0.5))
        np.testing.assert_allclose(spec.eval(1.5, 1.5), limit, rtol=1e-13)
        np.testing.assert_allclose(spec.peak(), limit, rtol=1e-13)
        # continuity into the origin
        np.testing.assert_allclose(spec.profile(1e-9), limit, rtol=1e-6)

    def test_infinite_smoothness_is_gaussian(self):
        d = np.linspace(0, 2, 11)
        np.testing.assert_array_equal(KernelSpec.matern(0.5, math.inf).profile(d),
                                      KernelSpec.gaussian(0.5).profile(d))

    def test_large_smoothness_approaches_gaussian(self):
        d = np.linspace(0.0, 3 * 0.5, 61)
        gauss = KernelSpec.gaussian(0.5)
        diff = np.abs(KernelSpec.matern(0.5, 200.0).profile(d) - gauss.profile(d))
        assert diff.max() <= 1e-2 * gauss.peak()

    def test_laplace_closed_form_on_grid(self):
        x = np.linspace(-3, 3, 100)
        spec = KernelSpec.matern(0.7, 0.5)
        np.testing.assert_allclose(spec.eval(x, 0.2), np.exp(-np.abs(x - 0.2) / 0.7) / 1.4,
                                   rtol=1e-12, atol=0)

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite_arguments_rejected(self, bad):
        with pytest.raises(DomainError):
            KernelSpec.gaussian(1.0).eval(bad, 0.0)
        with pytest.raises(DomainError):
            KernelSpec.matern(1.0, 2.5).eval_grad_x(0.0, bad)

    @pytest.mark.parametrize("kwargs", [dict(ell=0.0), dict(ell=-1.0), dict(ell=math.inf),
                                        dict(ell=1.0, nu=0.0), dict(ell=1.0, nu=math.nan)])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(DomainError):
            KernelSpec("matern", **kwargs)


class TestGradient:
    def test_gaussian_at_peak(self):
        assert KernelSpec.gaussian(0.3).eval_grad_x(0.4, 0.4) == 0.0

    def test_gaussian_value(self):
        np.testing.assert_allclose(KernelSpec.gaussian(1.0).eval_grad_x(1.0, 0.0),
                                   -math.exp(-0.5) / math.sqrt(2 * math.pi), rtol=1e-15)

    def test_matern_25_finite_difference(self):
        spec = KernelSpec.matern(0.5, 2.5)
        h = 1e-6
        fd = (spec.eval(0.4 + h, 0.1) - spec.eval(0.4 - h, 0.1)) / (2 * h)
        np.testing.assert_allclose(spec.eval_grad_x(0.4, 0.1), fd, rtol=1e-6)

    @pytest.mark.parametrize("spec", SPECS + [KernelSpec.matern(0.5, 60.0)], ids=lambda s: s.label)
    def test_finite_differences(self, spec, rng):
        x = rng.uniform(-2, 2, 40)
        y = rng.uniform(-2, 2, 40)
        y = np.where(np.abs(x - y) < 1e-3, y + 0.01, y)
        # large orders sum log terms of size ~ν, so a wider step keeps round-off down
        h = 1e-5 * spec.ell
        fd = (spec.eval(x + h, y) - spec.eval(x - h, y)) / (2 * h)
        np.testing.assert_allclose(spec.eval_grad_x(x, y), fd, rtol=1e-6, atol=1e-9 * spec.peak() / spec.ell)

    @pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.label)
    def test_antisymmetric(self, spec):
        x = np.array([-1.2, 0.0, 0.3, 2.2])
        D = gram_grad(spec, x)
        np.testing.assert_array_equal(D, -D.T)
        np.testing.assert_array_equal(np.diag(D), 0.0)

    def test_value_and_grad_consistent(self, rng):
        spec = KernelSpec.matern(0.6, 1.5)
        x, y = rng.normal(size=7), rng.normal(size=7)
        v, g = spec.value_and_grad_x(x, y)
        np.testing.assert_allclose(v, spec.eval(x, y), rtol=1e-15)
        np.testing.assert_allclose(g, spec.eval_grad_x(x, y), rtol=1e-15)

    def test_cusp_flag(self):
        lap = KernelSpec.matern(1.0, 0.5)
        assert lap.at_cusp(0.3, 0.3)
        assert lap.eval_grad_x(0.3, 0.3) == 0.0
        assert not lap.at_cusp(0.3, 0.4)
        assert not KernelSpec.matern(1.0, 2.5).at_cusp(0.3, 0.3)


class TestNormalization:
    @pytest.mark.parametrize("spec, tol", [
        (KernelSpec.gaussian(0.5), 1e-10),
        (KernelSpec.matern(0.1, 0.5), 1e-8),
        (KernelSpec.matern(0.5, 2.5), 1e-6),
    ])
    def test_stated_examples(self, spec, tol):
        assert abs(unit_integral_check(spec) - 1.0) <= tol

    @pytest.mark.parametrize("ell", [0.1, 0.5])
    @pytest.mark.parametrize("nu", [0.5, 2.5, math.inf, 1.3, 10.0])
    def test_table_configurations(self, ell, nu):
        spec = KernelSpec.gaussian(ell) if math.isinf(nu) else KernelSpec.matern(ell, nu)
        assert abs(unit_integral_check(spec) - 1.0) <= 1e-8


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-50, 50), y=st.floats(-50, 50),
       ell=st.floats(0.05, 5), nu=st.sampled_from([0.5, 1.5, 2.5, 0.8, 3.3, math.inf]))
def test_symmetric_and_positive(x, y, ell, nu):
    spec = KernelSpec.matern(ell, nu)
    v = spec.eval(x, y)
    assert v == spec.eval(y, x)
    assert 0.0 <= v <= spec.peak() * (1 + 1e-12)
    if abs(x - y) < 20 * ell:
        assert v > 0.0


@settings(max_examples=100, deadline=None)
@given(ell=st.floats(0.05, 5), nu=st.sampled_from([0.5, 1.5, 2.5, 0.8, 3.3, 50.0, math.inf]))
def test_monotone_decay(ell, nu):
    d = np.linspace(0, 10 * ell, 200)
    assert np.all(np.diff(KernelSpec.matern(ell, nu).profile(d)) <= 1e-15)


def test_gram_positive_definite(rng, make_points):
    for i in range(50):
        spec = SPECS[i % len(SPECS)]
        x = make_points(rng, int(rng.integers(1, 11)), min_gap=1e-3)
        sys_ = build_system(spec, x)
        assert sys_.jitter <= 1e-6 * spec.peak()
        np.testing.assert_allclose(sys_.matrix, gram(spec, x), rtol=0, atol=0)


def test_debye_against_scipy_below_threshold():
    z = np.array([0.5, 3.0, 30.0, 300.0])
    from scipy.special import kve
    for order in [40.0, 55.5]:
        np.testing.assert_allclose(log_bessel_k(order, z), np.log(kve(order, z)) - z, rtol=1e-10)
