import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from wavekin.kernels import (GammaQuad, T_factor, Tcal_closed, Tcal_factor, Z_all, Z_closed, Z_infinity,
                             Z_quadrature, kernel_bundle, phi_expdiff)

rates = st.floats(1.0, 8.0)
quads = st.tuples(rates, rates, rates, rates).map(np.array)
times = st.floats(1e-4, 30.0)


def test_Z_examples():
    q = np.ones(4)
    for j in (1, 2, 3, 4):
        assert Z_closed(0.0, q, j) == 0.0
        assert Z_closed(40.0, q, j) == pytest.approx(0.25, abs=1e-15)
        assert Z_closed(np.inf, q, j) == 0.25
    assert Z_quadrature(10.0, q, 1) == pytest.approx(0.25, abs=1e-4)
    assert Z_quadrature(1e-6, q, 2) <= 1e-6


def test_degenerate_branch():
    q = np.array([1.0, 1.0, 1.0, 3.0])  # 2 (g1 + g2 + g3) = G
    for t in (0.01, 0.3, 2.0, 9.0):
        val = Z_closed(t, q, 4)
        assert np.isfinite(val)
        assert val == pytest.approx(Z_quadrature(t, q, 4), abs=1e-12)


@pytest.mark.parametrize("delta", [1e-3, 1e-6, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12])
def test_near_degenerate_denominators(delta):
    q = np.array([1.0, 1.0, 1.0, 3.0 + delta])
    for j in (1, 4):
        for t in (0.05, 1.0, 5.0):
            assert abs(Z_closed(t, q, j) - Z_quadrature(t, q, j)) <= 1e-8


def test_Z_infinity_examples():
    assert Z_infinity(np.ones(4)) == 0.25
    assert Z_infinity([1, 1, 1, 5]) == 0.125
    assert Z_infinity(GammaQuad(1, 2, 3, 4)) == pytest.approx(0.1)


@given(quads, st.integers(0, 3), st.floats(0.01, 3.0))
def test_Z_infinity_monotone(q, k, bump):
    q2 = q.copy()
    q2[k] += bump
    assert Z_infinity(q2) < Z_infinity(q)


@given(times, quads, st.sampled_from([1, 2, 3, 4]))
def test_closed_matches_quadrature(t, q, j):
    assert abs(Z_closed(t, q, j) - Z_quadrature(t, q, j)) <= 1e-8


@given(times, quads, st.sampled_from([1, 2, 3, 4]))
def test_kernel_bounds(t, q, j):
    z = Z_closed(t, q, j)
    assert 0.0 <= z <= min(t, 1.0 / q[j - 1]) * (1 + 1e-12) <= 1.0 + 1e-12


def test_kernel_bounds_vectorised_sample():
    rng = np.random.default_rng(7)
    q = 1 + 9 * rng.random((10_000, 4))
    t = 10 ** rng.uniform(-4, 1.5, 10_000)
    Z = Z_all(t, q)
    assert np.all(Z >= 0)
    assert np.all(Z <= np.minimum(t[:, None], 1 / q) * (1 + 1e-12))


def test_Z_all_matches_Z_closed():
    rng = np.random.default_rng(3)
    q = 1 + 5 * rng.random((200, 4))
    for t in (1e-3, 0.4, 3.0):
        Z = Z_all(t, q)
        ref = np.stack([Z_closed(t, q, j) for j in (1, 2, 3, 4)], axis=-1)
        np.testing.assert_allclose(Z, ref, rtol=1e-13, atol=1e-16)


def test_long_memory_rate_frozen():
    # |Z^j(t0) - 1/G| <= C e^{-2 t0}, C fitted once over this sample and frozen
    C = 1.0
    rng = np.random.default_rng(1)
    for _ in range(500):
        q = 1 + rng.uniform(0, 3, 4) ** 2
        t = 10 ** rng.uniform(-3, 1)
        for j in (1, 2, 3, 4):
            assert abs(Z_closed(t, q, j) - 1 / q.sum()) <= C * math.exp(-2 * t)


def test_time_derivative_bound_frozen():
    # |dZ^j/dt0| <= C gamma0(R^2) for |s_l| <= R, C fitted once and frozen
    C = 0.25
    rng = np.random.default_rng(1)
    for _ in range(500):
        R = rng.uniform(0.5, 3)
        q = 1 + rng.uniform(0, R, 4) ** 2
        t = 10 ** rng.uniform(-3, 1)
        h = 1e-6 * max(t, 1e-3)
        for j in (1, 2, 3, 4):
            dz = abs(Z_closed(t + h, q, j) - Z_closed(t, q, j)) / h
            assert dz <= C * (1 + R * R)


def test_T_factor():
    q = np.array([1.0, 1.5, 2.0, 4.5])  # 2 g4 = G = 9
    assert T_factor(0.0, q) == 0.0
    for t in (0.1, 1.0, 4.0):
        assert T_factor(t, q) == pytest.approx(t * math.exp(-9.0 * t), rel=1e-14)
    rng = np.random.default_rng(2)
    for _ in range(50):
        q = 1 + 4 * rng.random(4)
        t = 5 * rng.random()
        G = q.sum()
        ref, _ = integrate.quad(lambda l: math.exp(-2 * q[3] * (t - l) - G * l), 0, t, epsabs=1e-15,
                                epsrel=1e-13)
        assert abs(T_factor(t, q) - ref) <= 1e-10


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0, 10))
def test_phi_expdiff_against_quadrature(a, b, t):
    ref, _ = integrate.quad(lambda l: math.exp(-b * (t - l) - a * l), 0, t, epsabs=1e-15, epsrel=1e-12)
    assert phi_expdiff(a, b, t) == pytest.approx(ref, rel=1e-9, abs=1e-14)


def test_Tcal_identity():
    assert Tcal_factor(0.0, np.ones(4), 1) == 0.0
    rng = np.random.default_rng(11)
    for _ in range(100):
        q = 1 + 4 * rng.random(4)
        t = 10 ** rng.uniform(-2, 1)
        for j in (1, 2, 3, 4):
            prod = math.prod(-math.expm1(-2 * q[m] * t) for m in range(4) if m != j - 1)
            assert abs(Z_closed(t, q, j) - Tcal_factor(t, q, j) / prod) <= 1e-8
            assert abs(Tcal_closed(t, q, j) - Tcal_factor(t, q, j)) <= 1e-12
    # long memory: T-cal / prod -> 1/4 for unit rates
    assert Tcal_factor(40.0, np.ones(4), 3) == pytest.approx(0.25, abs=1e-12)


def test_kernel_bundle_and_validation():
    b = kernel_bundle(1.0, (1, 2, 3, 4))
    assert b.Z_inf == pytest.approx(0.1)
    assert len(b.Z) == len(b.Tcal) == 4
    with pytest.raises(ValueError):
        GammaQuad(0.5, 1, 1, 1)
    with pytest.raises(ValueError):
        Z_closed(-1.0, np.ones(4), 1)
    with pytest.raises(ValueError):
        Z_closed(1.0, np.ones(4), 5)
