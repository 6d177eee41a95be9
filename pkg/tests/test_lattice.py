import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wavekin.lattice import (IncidenceMatrix, TestFunction, count_resonant_pairs, cyclic_alpha,
                             enumerate_orthogonal, finite_field_count, gaussian_test, intersection_bound,
                             orthogonal_basis, quadric_intersection_count, quadric_polynomials,
                             resonance_sum_2, resonance_sum_N)


def brute_orthogonal(m, M):
    d = len(m)
    pts = [x for x in product(range(-M, M + 1), repeat=d) if any(x) and np.dot(x, m) == 0]
    return sorted(pts)


def brute_pairs(d, M):
    box = [np.array(x) for x in product(range(-M, M + 1), repeat=d) if any(x)]
    return sum(1 for a in box for b in box if a @ b == 0)


# -- orthogonal sublattice ----------------------------------------------------

def test_orthogonal_basis_examples():
    B = orthogonal_basis([1, 0])
    assert B.shape == (1, 2) and abs(B[0, 0]) == 0 and abs(B[0, 1]) == 1
    B = orthogonal_basis([3, 5])
    assert sorted(map(abs, B[0])) == [3, 5] and B[0] @ [3, 5] == 0
    B = orthogonal_basis([1, 1, 1])
    covol = math.sqrt(np.linalg.det(B @ B.T))
    assert covol == pytest.approx(math.sqrt(3))
    with pytest.raises(ValueError):
        orthogonal_basis([0, 0, 0])


def test_orthogonal_basis_spans_box():
    m = np.array([1, 1, 1])
    B = orthogonal_basis(m)
    pts = brute_orthogonal(m, 5)
    # every solution is an integer combination: solve the least squares system and check integrality
    coef = np.linalg.lstsq(B.T.astype(float), np.array(pts, float).T, rcond=None)[0]
    assert np.allclose(coef, np.round(coef), atol=1e-9)


def test_enumerate_orthogonal_examples():
    assert sorted(map(tuple, enumerate_orthogonal([1, 0], 1))) == [(0, -1), (0, 1)]
    assert sorted(map(tuple, enumerate_orthogonal([1, 1], 1))) == [(-1, 1), (1, -1)]
    got = sorted(map(tuple, enumerate_orthogonal([1, 1, 1], 1)))
    assert len(got) == 6 and all(sorted(x) == [-1, 0, 1] for x in got)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("M", [1, 2, 3, 4])
def test_enumerate_orthogonal_complete(d, M):
    rng = np.random.default_rng(10 * d + M)
    for _ in range(6):
        m = rng.integers(-4, 5, d)
        if not m.any():
            continue
        got = [tuple(x) for x in enumerate_orthogonal(m, M)]
        assert got == brute_orthogonal(m, M)


def test_count_resonant_pairs():
    assert count_resonant_pairs(2, 0) == 0
    assert count_resonant_pairs(2, 1) == 16 == brute_pairs(2, 1)
    assert count_resonant_pairs(3, 1) == 192 == brute_pairs(3, 1)
    assert count_resonant_pairs(2, 3) == brute_pairs(2, 3)


# -- incidence matrices ---------------------------------------------------------

def test_incidence_matrix_validation():
    with pytest.raises(ValueError):
        IncidenceMatrix(np.array([[0, 1], [1, 0]]))
    with pytest.raises(ValueError):
        IncidenceMatrix(np.array([[0, 2], [-2, 0]]))
    a = IncidenceMatrix(np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 0]]))
    assert not a.no_zero_rows and not a.irreducible
    assert cyclic_alpha(4).no_zero_rows and cyclic_alpha(4).irreducible


@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(2, 3))
def test_sum_of_forms_vanishes(seed, N, d):
    rng = np.random.default_rng(seed)
    a = np.zeros((N, N), dtype=np.int64)
    iu = np.triu_indices(N, 1)
    a[iu] = rng.integers(-1, 2, len(iu[0]))
    A = IncidenceMatrix(a - a.T)
    z = rng.integers(-50, 51, size=(N, d))
    assert int(np.sum(A.omega(z))) == 0


# -- lattice sums -------------------------------------------------------------

def _zero_weight(d, N=2):
    return TestFunction(func=lambda z: np.zeros(z.shape[:-2]), d=d, N=N, radius=3.0)


def test_resonance_sum_2_trivial():
    assert resonance_sum_2(_zero_weight(3), 4, method="direct") == 0.0
    # weight living on z1 = 0 only
    phi = TestFunction(func=lambda z: np.where(np.all(z[..., 0, :] == 0, axis=-1),
                                               np.exp(-np.sum(z[..., 1, :] ** 2, axis=-1)), 0.0),
                       d=2, radius=6.0)
    assert resonance_sum_2(phi, 4, exclude_zeros=True, method="direct") == 0.0
    assert resonance_sum_2(phi, 4, exclude_zeros=False, method="direct") > 0


def test_resonance_sum_2_slow_decay_rejected():
    phi = TestFunction(func=lambda z: 1.0 / (1.0 + np.sum(z * z, axis=(-1, -2))), d=3)
    with pytest.raises(ValueError, match="nonconvergent"):
        resonance_sum_2(phi, 4, method="direct")


@pytest.mark.parametrize("d", [2, 3])
def test_resonance_sum_2_routes_agree(d):
    phi = gaussian_test(d)
    L = 4
    ref = resonance_sum_2(phi, L, method="direct")
    # the direct route cuts the Gaussian ball at a 1e-12 tail
    assert resonance_sum_2(phi, L, method="fft") == pytest.approx(ref, rel=1e-10)
    assert resonance_sum_2(phi, L, method="radial") == pytest.approx(ref, rel=1e-10)


def test_resonance_sum_2_brute_force():
    phi = gaussian_test(2)
    L = 2
    M = int(phi.radius * L) + 1
    tot = 0.0
    for a in product(range(-M, M + 1), repeat=2):
        for b in product(range(-M, M + 1), repeat=2):
            if any(a) and any(b) and np.dot(a, b) == 0:
                tot += math.exp(-(np.dot(a, a) + np.dot(b, b)) / L**2)
    assert resonance_sum_2(phi, L) == pytest.approx(tot * L ** (2 * (1 - 2)), rel=1e-12)


def test_zero_terms_difference_scales():
    # with and without the zero components: the gap is O(L^{2-d}) relative to the sum
    phi = gaussian_test(3)
    gaps = []
    for L in (4, 8, 16):
        gaps.append(abs(resonance_sum_2(phi, L, exclude_zeros=False) - resonance_sum_2(phi, L)))
    for L, g in zip((4, 8, 16), gaps):
        assert g <= 2.0 * L ** (2 - 3) * 2 * math.pi ** 1.5
    assert gaps[0] > gaps[1] > gaps[2]


def test_resonance_sum_N_reduces_to_N2():
    rng = np.random.default_rng(5)
    w = rng.uniform(0.5, 1.5)
    phi = TestFunction(func=lambda z: np.exp(-w * np.sum(z * z, axis=(-1, -2))), d=2, radius=6.0)
    a = IncidenceMatrix(np.array([[0, 1], [-1, 0]]))
    for L in (2, 4):
        ref = resonance_sum_2(phi, L, method="direct")
        got = resonance_sum_N(phi, a, L, box=6.0, d2_lognorm=False, method="brute")
        assert got == pytest.approx(ref, rel=1e-12)


def test_resonance_sum_N_zero_row_and_zero_weight():
    a = np.array([[0, 1, 0], [-1, 0, 0], [0, 0, 0]])
    with pytest.raises(ValueError, match="empty admissible set"):
        resonance_sum_N(gaussian_test(2, N=3), a, 4)
    assert resonance_sum_N(_zero_weight(2, 3), cyclic_alpha(3), 2, box=2.0, method="brute") == 0.0


def test_resonance_sum_N_routes_agree():
    phi = gaussian_test(2, N=3)
    a = cyclic_alpha(3)
    v1 = resonance_sum_N(phi, a, 2, box=3.0, method="brute")
    v2 = resonance_sum_N(phi, a, 2, box=3.0, method="propagate")
    assert v2 == pytest.approx(v1, rel=1e-12)


# -- quadric intersections and finite fields ---------------------------------------

def brute_intersection(alpha, z1, v, M):
    """Direct check of z_j . (alpha z)_j = 0 for 1 < j < N with z_N fixed by z_1 and v."""
    polys = quadric_polynomials(alpha, z1, v)
    m = (alpha.N - 2) * len(z1)
    cnt = 0
    for x in product(range(-M, M + 1), repeat=m):
        ok = True
        for q in polys:
            val = sum(c * math.prod(xi**e for xi, e in zip(x, ex)) for ex, c in q.items())
            if val:
                ok = False
                break
        cnt += ok
    return cnt


def test_quadric_count_examples():
    a, _ = cyclic_alpha(3).normalized()
    c, b, r = quadric_intersection_count(a, [1, 0], [0, 1], 0.0, 4)
    assert c == 1 and r <= 1
    c, b, r = quadric_intersection_count(a, [1, 0], [0, 1], 1.0, 4)
    assert c == brute_intersection(a, [1, 0], [0, 1], 4)
    assert b == intersection_bound(3, 2, 1.0, 4) == 4 * 12
    assert r <= 1
    with pytest.raises(ValueError):
        quadric_intersection_count(a, [1, 0], [1, 1], 1.0, 4)


def test_quadric_count_matches_brute_force_N4():
    a, _ = cyclic_alpha(4).normalized()
    c, b, r = quadric_intersection_count(a, [1, 2], [2, -1], 1.0, 2)
    assert c == brute_intersection(a, [1, 2], [2, -1], 2)
    assert r <= 1


def test_finite_field_examples():
    assert finite_field_count([{(1, 0): 1}], 5, 2) == (5, 5)
    for p in (3, 5, 7):
        c, b = finite_field_count([{(1, 1): 1}], p, 2)
        assert c == 2 * p - 1 and b == 2 * p
    with pytest.raises(ValueError, match="not prime"):
        finite_field_count([{(1, 0): 1}], 6, 2)


def test_finite_field_reduced_system():
    a, _ = cyclic_alpha(4).normalized()
    polys = quadric_polynomials(a, [1, 0], [0, 1])
    c, b = finite_field_count(polys, 7, 4)
    assert c <= 7 ** ((4 - 2) * (2 - 1)) * 2 ** (4 - 2)
    degs = [max(sum(e) for e in q) for q in polys]
    assert b == 7 ** (4 - len(polys)) * math.prod(degs)
