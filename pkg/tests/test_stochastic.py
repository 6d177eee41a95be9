import math
import warnings
from itertools import product

import numpy as np
import pytest
from scipy import integrate

from wavekin.model import ForcingProfile, ModelParams
from wavekin.stochastic import (SiteGrid, _Y, build_resonant_table, closed_form_a1_inf, duhamel_a1,
                                duhamel_a2, effective_sde_step, exp_trapezoid_weights, mc_estimate, ou_step,
                                simulate, spectrum_terms)

P = ModelParams(d=2, L=2.0, r_star=1.0, forcing=ForcingProfile(1.0, 1.0), epsilon=0.1)


@pytest.fixture(scope="module")
def sim():
    return simulate(P, M_cut=1, n_samples=4000, seed=7, order=2)


def brute_table(d, M):
    sites = [np.array(m) for m in product(range(-M, M + 1), repeat=d)]
    out = {}
    for s in sites:
        rows = set()
        for s1 in sites:
            for s2 in sites:
                s3 = s1 + s2 - s
                if np.abs(s3).max() > M or (s1 - s) @ (s2 - s) != 0:
                    continue
                if {tuple(s1), tuple(s2)} == {tuple(s3), tuple(s)}:
                    continue
                rows.add((tuple(s1), tuple(s2), tuple(s3)))
        out[tuple(s)] = rows
    return out


@pytest.mark.parametrize("d,M", [(2, 1), (2, 2), (3, 1)])
def test_table_matches_brute_force(d, M):
    t = build_resonant_table(d, M)
    S = t.grid.sites
    ref = brute_table(d, M)
    for i, s in enumerate(S):
        got = {tuple(map(tuple, S[row])) for row in t.entries(i)}
        assert got == ref[tuple(s)]
        assert len(got) == len(t.entries(i))


def test_table_examples_and_symmetry():
    t = build_resonant_table(2, 1)
    g = t.grid
    i0 = g.index([0, 0])
    assert len(t.entries(i0)) == 8
    S = g.sites
    # every entry comes with its (s1, s2) swap
    for i in range(S.shape[0]):
        e = {tuple(r) for r in t.entries(i)}
        assert e == {(b, a, c) for a, b, c in e}
    # lattice symmetries fixing s = 0 act on the table at 0
    e0 = {tuple(map(tuple, S[r])) for r in t.entries(i0)}
    for M in (np.array([[0, 1], [1, 0]]), np.array([[-1, 0], [0, 1]])):
        img = {tuple(tuple(M @ np.array(x)) for x in row) for row in e0}
        assert img == e0
    # corner sites of a small grid have no room for resonances
    assert build_resonant_table(2, 3).size == 5120
    with pytest.raises(ValueError):
        build_resonant_table(2, 0)


def test_site_grid_index():
    g = SiteGrid(3, 2)
    for k, m in enumerate(g.sites):
        assert g.index(m) == k
    with pytest.raises(KeyError):
        g.index([3, 0, 0])


def test_mc_estimate():
    x = np.random.default_rng(0).normal(size=(500, 3))
    e = mc_estimate(x, seed=4)
    np.testing.assert_allclose(e.stderr, x.std(axis=0, ddof=1) / math.sqrt(500))
    assert e.count == 500 and e.seed == 4
    re, im = mc_estimate(x + 1j * x)
    np.testing.assert_array_equal(re.mean, im.mean)


def test_ou_step_laws():
    rng = np.random.default_rng(1)
    g, B = np.array([1.0, 2.0]), np.array([0.5, 0.2])
    assert np.all(ou_step(np.zeros(2), 0.3, g, np.zeros(2), rng) == 0)
    n = 10_000
    a = ou_step(np.zeros((n, 2)), 30.0, g, B, rng)
    # stationary variance, no pseudo-correlation, circularity
    assert np.all(mc_estimate(np.abs(a) ** 2).zscore(B) < 3)
    re, im = mc_estimate(a * a)
    assert np.all(re.zscore() < 3) and np.all(im.zscore() < 3)
    re, im = mc_estimate(a[:, 0] * np.conj(a[:, 1]))
    assert re.zscore() < 3 and im.zscore() < 3
    # lag structure B (e^{-g |l1 - l2|} - e^{-g (l1 + l2)}) from a zero start
    l1, l2 = 0.4, 0.9
    x1 = ou_step(np.zeros((n, 2)), l1, g, B, rng)
    x2 = ou_step(x1, l2 - l1, g, B, rng)
    ref = B * (np.exp(-g * (l2 - l1)) - np.exp(-g * (l1 + l2)))
    re, _ = mc_estimate(x1 * np.conj(x2))
    assert np.all(re.zscore(ref) < 3)


def test_exp_trapezoid_weights():
    for g in (1e-6, 0.3, 2.0, 40.0):
        for h in (0.01, 0.2):
            w0, w1 = exp_trapezoid_weights(g, h)
            r0, _ = integrate.quad(lambda u: math.exp(-g * (h - u)) * (1 - u / h), 0, h, epsabs=1e-15)
            r1, _ = integrate.quad(lambda u: math.exp(-g * (h - u)) * u / h, 0, h, epsabs=1e-15)
            assert w0 == pytest.approx(r0, rel=1e-10) and w1 == pytest.approx(r1, rel=1e-10)


def test_simulate_reproducible():
    a = simulate(P, M_cut=1, n_samples=300, seed=3, chunk=100)["a"]
    b = simulate(P, M_cut=1, n_samples=300, seed=3, chunk=100)["a"]
    c = simulate(P, M_cut=1, n_samples=300, seed=4, chunk=100)["a"]
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_simulate_matches_stored_path_duhamel():
    res = simulate(P, M_cut=1, n_samples=1, seed=11, order=2, tau=2.0, h=0.02)
    g, B, h, table = res["gamma"], res["B"], res["h"], res["table"]
    n_steps = int(round(res["tau"] / h))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([11, 0])))
    noise = rng.standard_normal((1, n_steps, g.size, 2))[0]
    sd = np.sqrt(B * (-np.expm1(-2 * g * h)) / 2)
    path = np.zeros((n_steps + 1, g.size), dtype=complex)
    for k in range(n_steps):
        path[k + 1] = np.exp(-g * h) * path[k] + sd * (noise[k, :, 0] + 1j * noise[k, :, 1])
    np.testing.assert_allclose(path[-1], res["a"][0, 0], rtol=1e-13)
    a1 = duhamel_a1(path, h, g, table, P.L, P.d)
    np.testing.assert_allclose(a1, res["a"][0, 1], rtol=1e-11, atol=1e-16)
    # a^(1) path for a^(2)
    path1 = np.array([duhamel_a1(path[:k + 1], h, g, table, P.L, P.d) if k else np.zeros(g.size)
                      for k in range(n_steps + 1)])
    a2 = duhamel_a2(path, path1, h, g, table, P.L, P.d)
    np.testing.assert_allclose(a2, res["a"][0, 2], rtol=1e-10, atol=1e-16)


def test_duhamel_zero_and_coarse_warning():
    table = build_resonant_table(2, 1)
    g = np.ones(9)
    assert np.all(duhamel_a1(np.zeros((5, 9)), 0.05, g, table, 2.0, 2) == 0)
    assert np.all(duhamel_a2(np.zeros((5, 9)), np.zeros((5, 9)), 0.05, g, table, 2.0, 2) == 0)
    with pytest.warns(UserWarning, match="too coarse"):
        duhamel_a1(np.ones((3, 9)), 0.2, g, table, 2.0, 2)


def test_spectrum_identities(sim):
    st = spectrum_terms(sim, P)
    n0 = st["n"][0]
    ref = sim["B"] * -np.expm1(-2 * sim["gamma"] * sim["tau"])
    # nine sites at a Bonferroni level of 5%
    assert np.all(n0.zscore(ref) < 3.26)
    assert np.all(st["n"][1].zscore() < 3.26)
    np.testing.assert_allclose(st["total"].mean, st["decomposed"].mean, rtol=1e-12)
    re, im = mc_estimate(sim["a"][:, 1])
    assert np.all(re.zscore() < 3.26) and np.all(im.zscore() < 3.26)
    re, im = mc_estimate(sim["a"][:, 2])
    assert np.all(re.zscore() < 3.26) and np.all(im.zscore() < 3.26)


def test_a1_closed_form(sim):
    table = sim["table"]
    a1sq = mc_estimate(np.abs(sim["a"][:, 1]) ** 2)
    for i in range(table.grid.sites.shape[0]):
        ref = closed_form_a1_inf(P, table, i)
        if ref == 0:
            assert np.all(sim["a"][:, 1, i] == 0)
        else:
            assert a1sq.zscore(ref)[i] < 3.26


def test_resonant_nonlinearity_conserves_mass():
    table = build_resonant_table(2, 2)
    rng = np.random.default_rng(5)
    for _ in range(20):
        a = rng.normal(size=25) + 1j * rng.normal(size=25)
        Y = np.zeros(25, dtype=complex)
        _Y(a, a, a, table.ptr, table.triples, Y)
        # d/dt sum |a|^2 from i Y is -2 Im sum conj(a) Y
        assert abs(np.sum(np.conj(a) * Y).imag) <= 1e-12 * np.sum(np.abs(a) ** 4) * table.size


def test_effective_sde_step():
    table = build_resonant_table(2, 1)
    g, B = 1 + np.arange(9.0), np.full(9, 0.3)
    a = np.random.default_rng(0).normal(size=9) + 0j
    x = effective_sde_step(a, 0.01, 0.0, g, B, table, 2.0, 2, np.random.default_rng(9))
    y = ou_step(a, 0.01, g, B, np.random.default_rng(9))
    np.testing.assert_array_equal(x, y)
    with pytest.raises(FloatingPointError, match="step size too large"):
        effective_sde_step(a * 1e3, 1.0, 1e12, g, B, table, 2.0, 2, np.random.default_rng(0))


def test_frak_minus_a_shrinks_with_L():
    diffs = []
    for L in (2.0, 4.0):
        p = ModelParams(d=2, L=L, forcing=ForcingProfile(1.0, 1.0), epsilon=0.05)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sa = simulate(p, M_cut=1, n_samples=400, seed=1, tau=3.0, h=0.05)
            sf = simulate(p, M_cut=1, n_samples=400, seed=1, tau=3.0, h=0.05, variant="frak")
        diffs.append(np.max(np.abs(sa["a"][:, 1] - sf["a"][:, 1])))
    assert diffs[1] < diffs[0]
