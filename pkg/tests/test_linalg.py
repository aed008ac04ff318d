import numpy as np
import pytest
from scipy import linalg as sla

from mmdquant.errors import DegeneratePoints, IllConditioned
from mmdquant.kernel import KernelSpec, gram
from mmdquant.linalg import build_system, factor_matrix, solve, solve_bordered

GAUSS = KernelSpec.gaussian(0.5)


def test_single_point():
    sys_ = build_system(KernelSpec.matern(0.3, 2.5), [0.7])
    assert sys_.n == 1
    assert sys_.jitter == 0.0
    np.testing.assert_allclose(sys_.matrix, [[KernelSpec.matern(0.3, 2.5).peak()]])


def test_matrix_entries():
    x = np.array([-1.0, 0.0, 1.0])
    sys_ = build_system(GAUSS, x)
    direct = np.array([[np.exp(-0.5 * ((a - b) / 0.5) ** 2) / np.sqrt(2 * np.pi * 0.25)
                        for b in x] for a in x])
    np.testing.assert_allclose(sys_.matrix, direct, rtol=0, atol=1e-15)


@pytest.mark.parametrize("points", [[0.2, 0.2], [0.0, 1.0, 0.0], []])
def test_degenerate_points(points):
    with pytest.raises(DegeneratePoints):
        build_system(GAUSS, points)


def test_factor_residual_and_log_det(rng, make_points):
    for spec in [GAUSS, KernelSpec.matern(1.0, 0.5), KernelSpec.matern(0.2, 2.5)]:
        x = make_points(rng, 8)
        sys_ = build_system(spec, x)
        L = sys_.chol
        resid = np.max(np.abs(L @ L.T - (sys_.matrix + sys_.jitter * np.eye(8))))
        assert resid <= 1e-10 * np.max(np.diag(sys_.matrix))
        np.testing.assert_allclose(sys_.log_det, np.linalg.slogdet(sys_.matrix)[1], rtol=1e-10)


def test_jitter_escalates_for_near_duplicates():
    x = np.array([0.0, 1e-10, 2e-10, 1.0])
    sys_ = build_system(KernelSpec.gaussian(1.0), x)
    assert 0.0 < sys_.jitter <= 1e-6 * sys_.matrix[0, 0]


def test_ill_conditioned_raises():
    K = np.ones((3, 3))
    K[0, 1] = K[1, 0] = 2.0  # indefinite
    with pytest.raises(IllConditioned):
        factor_matrix(K, np.arange(3.0))


class TestSolve:
    def test_zero_rhs(self):
        sys_ = build_system(GAUSS, [-1.0, 0.5, 2.0])
        np.testing.assert_array_equal(solve(sys_, np.zeros(3)), 0.0)

    def test_columns_of_k(self):
        sys_ = build_system(GAUSS, [-1.0, -0.2, 0.5, 2.0])
        for j in range(4):
            e = np.zeros(4)
            e[j] = 1.0
            np.testing.assert_allclose(solve(sys_, sys_.matrix[:, j]), e, atol=1e-8)

    def test_against_lu(self, rng, make_points):
        x = make_points(rng, 6)
        sys_ = build_system(KernelSpec.matern(0.8, 2.5), x)
        rhs = rng.normal(size=6)
        lu = sla.lu_factor(sys_.matrix)
        np.testing.assert_allclose(solve(sys_, rhs), sla.lu_solve(lu, rhs), rtol=1e-9, atol=1e-12)
        assert np.linalg.norm(sys_.matrix @ solve(sys_, rhs) - rhs) <= 1e-8 * np.linalg.norm(rhs)


class TestBordered:
    def test_single_point(self):
        sys_ = build_system(GAUSS, [0.3])
        p, lam_half = solve_bordered(sys_, [0.25])
        np.testing.assert_array_equal(p, [1.0])
        np.testing.assert_allclose(lam_half, 0.25 - sys_.matrix[0, 0], rtol=1e-15)

    def test_explicit_formula(self, rng, make_points):
        # p = K⁻¹m - (1ᵀK⁻¹m - 1) / (1ᵀK⁻¹1) · K⁻¹1 written out with an explicit inverse
        x = make_points(rng, 5)
        K = gram(GAUSS, x)
        m = rng.uniform(0.1, 0.5, 5)
        Kinv = np.linalg.inv(K)
        one = np.ones(5)
        expected = Kinv @ m - (one @ Kinv @ m - 1.0) / (one @ Kinv @ one) * (Kinv @ one)
        p, _ = solve_bordered(build_system(GAUSS, x), m)
        np.testing.assert_allclose(p, expected, atol=1e-10)

    def test_interior_stationary_point(self, rng, make_points):
        x = make_points(rng, 6)
        sys_ = build_system(KernelSpec.matern(0.5, 2.5), x)
        q = rng.dirichlet(np.ones(6))
        p, lam_half = solve_bordered(sys_, sys_.matrix @ q)
        np.testing.assert_allclose(p, q, atol=1e-9)
        assert abs(lam_half) <= 1e-9

    @pytest.mark.parametrize("spec", [GAUSS, KernelSpec.matern(0.3, 0.5), KernelSpec.matern(1.0, 2.5)],
                             ids=lambda s: s.label)
    def test_kkt_residual(self, spec, rng, make_points):
        for _ in range(30):
            n = int(rng.integers(1, 11))
            x = make_points(rng, n)
            sys_ = build_system(spec, x)
            m = rng.uniform(0.0, 1.0, n)
            p, lam_half = solve_bordered(sys_, m)
            assert abs(p.sum() - 1.0) <= 1e-12
            resid = np.max(np.abs(sys_.matrix @ p + lam_half - m))
            assert resid <= 1e-8 * np.max(np.abs(m))
