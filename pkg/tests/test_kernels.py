import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rotated_mondrian.core import SeededRng
from rotated_mondrian.kernels import (CholeskyError, KernelSpec, gp_sample,
                                      isotropic_limit_kernel, isotropic_limit_mc,
                                      isotropic_limit_quad, jittered_cholesky, kernel_matrix,
                                      laplace_kernel, unit_ball_constants)

# reference value of the d=2, lifetime=1, r=1 rotated limit, from adaptive quadrature
ISO_2D_R1 = 0.28215042429


@pytest.mark.parametrize("d, kappa, omega", [(1, 2.0, 2.0), (2, math.pi, 2 * math.pi),
                                             (3, 4 * math.pi / 3, 4 * math.pi)])
def test_ball_constants(d, kappa, omega):
    c = unit_ball_constants(d)
    assert c.volume == pytest.approx(kappa, abs=1e-12)
    assert c.surface == pytest.approx(omega, abs=1e-12)


def test_ball_constants_relation():
    for d in range(1, 10):
        c = unit_ball_constants(d)
        assert abs(c.surface - d * c.volume) < 1e-12


def test_ball_constants_d0():
    with pytest.raises(ValueError):
        unit_ball_constants(0)


def test_laplace_values():
    x = np.array([0.3, -0.1])
    assert laplace_kernel(x, x, 2.0) == 1.0
    assert laplace_kernel(np.zeros(2), np.array([0.1, 0.2]), 1.0) == pytest.approx(
        0.740818220681718, abs=1e-12)
    d = np.array([0.05, 0.12])
    assert laplace_kernel(np.zeros(2), d, 2.0) == pytest.approx(
        laplace_kernel(np.zeros(2), 2 * d, 1.0), rel=1e-15)


def test_isotropic_r0_and_d1():
    for d in (1, 2, 3, 4):
        assert isotropic_limit_kernel(0.0, 3.0, d) == 1.0
    r = np.linspace(0, 3, 7)
    assert np.allclose(isotropic_limit_kernel(r, 1.5, 1), np.exp(-1.5 * r))


def test_isotropic_reference_value():
    v = isotropic_limit_quad(1.0, 1.0)
    assert v == pytest.approx(ISO_2D_R1, abs=1e-10)
    assert math.exp(-math.sqrt(2)) <= v <= math.exp(-1)
    assert isotropic_limit_kernel(1.0, 1.0, 2) == pytest.approx(v, abs=1e-10)


def test_gauss_legendre_matches_adaptive_quadrature():
    for r in (0.01, 0.3, 1.0, 2.5):
        for lam in (0.5, 3.0, 10.0):
            assert isotropic_limit_kernel(r, lam, 2) == pytest.approx(
                isotropic_limit_quad(r, lam), abs=1e-9)


@pytest.mark.parametrize("r", [0.1, 0.5, 1.0, 2.0])
def test_quadrature_vs_monte_carlo(r):
    mean, se = isotropic_limit_mc(r, 1.0, 2, 200_000, SeededRng(int(10 * r)))
    assert abs(mean - isotropic_limit_quad(r, 1.0)) <= 3 * se


@pytest.mark.parametrize("d", [2, 3])
def test_envelope(d):
    r = np.linspace(0.0, 3.0, 20)
    k = isotropic_limit_kernel(r, 1.0, d)
    assert np.all(np.exp(-math.sqrt(d) * r) <= k + 1e-12)
    assert np.all(k <= np.exp(-r) + 1e-12)


def test_monotone_in_r_and_lifetime():
    r = np.linspace(0.0, 3.0, 40)
    assert np.all(np.diff(isotropic_limit_kernel(r, 1.0, 2)) < 0)
    lams = np.linspace(0.1, 5.0, 30)
    vals = [isotropic_limit_kernel(0.7, lam, 2) for lam in lams]
    assert np.all(np.diff(vals) < 0)


@settings(max_examples=50, deadline=None)
@given(r1=st.floats(0, 4), r2=st.floats(0, 4), lam=st.floats(0.1, 5))
def test_lipschitz(r1, r2, lam):
    k1, k2 = isotropic_limit_kernel(np.array([r1, r2]), lam, 2)
    assert abs(k1 - k2) <= lam * math.sqrt(2) * abs(r1 - r2) + 1e-12


def test_negative_r_rejected():
    with pytest.raises(ValueError):
        isotropic_limit_kernel(-0.1, 1.0, 2)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("laplace", 0.0, 2)
    with pytest.raises(ValueError):
        KernelSpec("gaussian", 1.0, 2)


def test_kernel_matrix_kinds():
    X = SeededRng(0).generator().random((6, 2))
    K = kernel_matrix(X, spec=KernelSpec("laplace", 2.0, 2))
    assert K[0, 1] == pytest.approx(math.exp(-2.0 * np.abs(X[0] - X[1]).sum()))
    Ki = kernel_matrix(X, spec=KernelSpec("isotropic", 2.0, 2))
    assert Ki[0, 1] == pytest.approx(isotropic_limit_quad(np.linalg.norm(X[0] - X[1]), 2.0),
                                     abs=1e-9)
    assert np.allclose(np.diag(Ki), 1.0)


def test_gp_single_point_variance():
    spec = KernelSpec("isotropic", 1.0, 2)
    draws = gp_sample(np.array([[0.2, 0.3]]), spec, 0.0, SeededRng(1), n_draws=10_000)
    v = draws.var()
    se = v * math.sqrt(2 / (draws.size - 1))
    assert abs(v - 1.0) < 3 * se


def test_gp_identical_points_nearly_equal():
    spec = KernelSpec("isotropic", 1.0, 2)
    y = gp_sample(np.array([[0.2, 0.3], [0.2, 0.3]]), spec, 0.0, SeededRng(2))
    assert abs(y[0] - y[1]) <= 1e-3


def test_gp_empirical_covariance():
    g = np.linspace(0, 1, 7)
    X = np.array([(a, b) for a in g for b in g])[:50]
    spec = KernelSpec("isotropic", 3.0, 2)
    Y = gp_sample(X, spec, 0.0, SeededRng(3), n_draws=500)
    K = spec(X)
    C = Y.T @ Y / Y.shape[0]
    se = np.sqrt((K ** 2 + np.outer(np.diag(K), np.diag(K))) / Y.shape[0])
    assert np.mean(np.abs(C - K) <= 4 * se) > 0.999


def test_gp_noise_adds_variance():
    spec = KernelSpec("laplace", 1.0, 1)
    draws = gp_sample(np.array([[0.0]]), spec, 0.5, SeededRng(4), n_draws=20_000)
    assert draws.var() == pytest.approx(1.25, rel=0.05)


def test_jittered_cholesky_recovers_and_fails():
    K = np.ones((3, 3))
    L, jitter = jittered_cholesky(K)
    assert jitter > 0 and np.allclose(L @ L.T, K, atol=1e-6)
    with pytest.raises(CholeskyError, match="jitter"):
        jittered_cholesky(-np.eye(2))
