import json
import math
from itertools import product

import numpy as np
import pytest

from wavekin.diagrams import (all_parametrizations, build_D, correlation_sum, correlation_sum_grid, count_D,
                              feynman_set, incidence_and_map, is_true, moment, omega_alpha, omega_direct,
                              parametrization, render, to_json)
from wavekin.model import ForcingProfile, ModelParams
from wavekin.stochastic import build_resonant_table, closed_form_a1_inf

P = ModelParams(d=2, L=2.0, r_star=1.0, forcing=ForcingProfile(1.0, 1.0), epsilon=0.1)


def fuss_catalan(m):
    return math.comb(3 * m, m) // (2 * m + 1)


def test_counts():
    assert [len(build_D(m)) for m in range(5)] == [1, 1, 3, 12, 55]
    for m in range(6):
        assert count_D(m) == fuss_catalan(m)
        # recurrence over (m1, m2, m3) with m1 + m2 + m3 = m - 1
        if m:
            rec = sum(count_D(a) * count_D(b) * count_D(m - 1 - a - b)
                      for a in range(m) for b in range(m - a))
            assert rec == count_D(m)
    assert len(build_D(5)) == 273


@pytest.mark.parametrize("m", range(5))
def test_diagram_structure(m):
    for D in build_D(m):
        assert len(D.blocks) == m
        for b in D.blocks:
            assert b.virtual in b.vertices
            assert sum(v == b.virtual for v in b.vertices) == 1


def test_pairings():
    F00 = feynman_set(0, 0)
    assert len(F00) == 1 and F00[0].pairs == ((("x", 0), ("s", 0)),)
    F11 = feynman_set(1, 1)
    assert len(F11) == 2
    for F in F11:
        a, A, c = incidence_and_map(F)
        assert abs(a[0, 1]) == 1 and np.array_equal(a, -a.T)
        assert is_true(F)
    for m, n in [(1, 1), (2, 0), (2, 2), (3, 1)]:
        for F in feynman_set(m, n):
            where = F.D.block_of()
            assert all(where[u] != where[v] for u, v in F.pairs)
            assert len(F.pairs) == F.N + 1
            assert F.c in (1, -1, 1j, -1j)


def _classes(F):
    """Union the solid edges; returns vertex -> class id."""
    solid = F.solid()
    verts = [("x", i) for i in range(2 * F.N + 1)] + [("s", i) for i in range(2 * F.N + 1)]
    cls, k = {}, 0
    for v in verts:
        if v in cls:
            continue
        cls[v] = cls[solid[v]] = k
        k += 1
    return cls, k


def brute_true(F, M=3):
    """Search integer indices (d = 1) obeying the block relations and delta' directly."""
    if F.N == 0:
        return True
    cls, k = _classes(F)
    fixed = {cls[("x", 0)], cls[("s", 0)]}
    free = [c for c in range(k) if c not in fixed]
    grid = np.array(list(product(range(-M, M + 1), repeat=len(free))), dtype=np.int64)
    vals = np.zeros((grid.shape[0], k), dtype=np.int64)
    vals[:, free] = grid
    ok = np.ones(grid.shape[0], dtype=bool)
    for b in F.D.blocks:
        x1, x2, s1, s2 = (vals[:, cls[v]] for v in b.vertices)
        ok &= x1 + x2 == s1 + s2
        same = ((x1 == s1) & (x2 == s2)) | ((x1 == s2) & (x2 == s1))
        ok &= ~same
    return bool(ok.any())


@pytest.mark.parametrize("m,n", [(m, n) for m in range(4) for n in range(4 - m)])
def test_trueness_matches_brute_force(m, n):
    for F in feynman_set(m, n):
        assert is_true(F) == brute_true(F)


def test_trueness_census():
    # diagrams of F_{m,0} and F_{0,n} with a zero row of alpha^F, frozen from the brute-force check
    bad = {}
    for m in range(5):
        for n in range(5 - m):
            k = sum(not is_true(F) for F in feynman_set(m, n))
            if k:
                bad[(m, n)] = k
    assert bad == {(0, 3): 28, (3, 0): 28, (0, 4): 512, (4, 0): 512}


def test_untrue_diagrams_contribute_zero():
    F = next(F for F in feynman_set(3, 0) if not is_true(F))
    assert correlation_sum(F, P, np.zeros(2), 1.0) == 0.0
    assert correlation_sum_grid(F, P, [0, 0], 1.0, 1) == 0.0


@pytest.mark.parametrize("m,n", [(1, 1), (2, 0), (2, 1), (1, 2), (2, 2), (3, 1)])
def test_omega_two_routes(m, n):
    rng = np.random.default_rng(m * 10 + n)
    s = rng.normal(size=2)
    for F in feynman_set(m, n):
        for Pz in all_parametrizations(F):
            z = rng.normal(size=(50, F.N, 2))
            np.testing.assert_allclose(omega_direct(Pz, F, s, z), omega_alpha(Pz, z), atol=1e-10)


@pytest.mark.parametrize("m,n", [(1, 1), (2, 1), (2, 2)])
def test_linear_relations(m, n):
    for F in feynman_set(m, n):
        Pz = parametrization(F)
        for b in F.D.blocks:
            j = b.j
            np.testing.assert_array_equal(Pz.A[2 * j - 1] + Pz.A[2 * j], Pz.S[2 * j - 1] + Pz.S[2 * j])


def test_moment_11_matches_closed_form():
    table = build_resonant_table(2, 1)
    i0 = table.grid.index([0, 0])
    ref = closed_form_a1_inf(P, table, i0)
    val = moment(1, 1, P, [0, 0], 10.0, M_cut=1)
    assert abs(val.imag) < 1e-14
    assert val.real == pytest.approx(ref, rel=1e-4)


def test_dual_parametrisations_agree():
    for F in feynman_set(1, 1) + feynman_set(2, 0):
        if not is_true(F):
            continue
        vals = [correlation_sum_grid(F, P, [0, 0], 2.0, 1, Pz) for Pz in all_parametrizations(F)]
        assert len(vals) >= 1
        np.testing.assert_allclose(vals, vals[0], rtol=1e-12)


def test_export():
    F = feynman_set(2, 1)[0]
    data = json.loads(to_json(F))
    assert set(data) == {"m", "n", "blocks", "pairs", "alpha", "A", "c"}
    assert len(data["blocks"]) == 3 and len(data["A"]) == 7
    text = render(F)
    assert text.startswith("F in F_(2,1)") and text.count("block") == 3
