"""Monte Carlo for the amplitude expansion on a truncated lattice.

Sites are the integer points |m|_inf <= M_cut, with frequencies s = m / L.
a^(0) is an Ornstein-Uhlenbeck process sampled exactly on a step grid;
a^(1) and a^(2) are Duhamel integrals of the resonant cubic nonlinearity,
accumulated along the path with an exponential trapezoid rule (the factor
e^{-gamma (tau - l)} is integrated exactly against the piecewise linear
interpolant of the nonlinearity).

Two variants are supported: ``'a'`` drops the cubic self-term, ``'frak'``
keeps it (subtracting |a_s|^2 a_s at order one and the corresponding
placements at order two).

Random numbers: samples are processed in chunks, chunk c uses a Philox
generator seeded by SeedSequence([seed, c]); results are reduced in chunk
order, so estimates do not depend on how chunks are scheduled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import product

import numba
import numpy as np

from .model import ModelParams, chi_d, gamma_of_sq

__all__ = [
    "SiteGrid",
    "ResonantTable",
    "McEstimate",
    "build_resonant_table",
    "ou_step",
    "exp_trapezoid_weights",
    "duhamel_a1",
    "duhamel_a2",
    "simulate",
    "mc_estimate",
    "closed_form_a1_inf",
    "effective_sde_step",
    "spectrum_terms",
]


@dataclass(frozen=True)
class SiteGrid:
    """Integer sites |m|_inf <= M_cut in dimension d, in lexicographic order."""

    d: int
    M_cut: int

    @property
    def sites(self):
        r = range(-self.M_cut, self.M_cut + 1)
        return np.array(list(product(r, repeat=self.d)), dtype=np.int64)

    def index(self, m):
        m = np.asarray(m, dtype=np.int64)
        n = 2 * self.M_cut + 1
        if np.any(np.abs(m) > self.M_cut):
            raise KeyError("site outside the grid")
        idx = 0
        for k in range(self.d):
            idx = idx * n + int(m[k] + self.M_cut)
        return idx


@dataclass(frozen=True)
class ResonantTable:
    """For every site s, the index triples (s1, s2, s3) of resonant interactions.

    ``ptr[i]:ptr[i+1]`` slices ``triples`` for site i; L enters only
    through s = m / L, so the table is the same for every L.
    """

    grid: SiteGrid
    ptr: np.ndarray
    triples: np.ndarray

    def entries(self, i):
        return self.triples[self.ptr[i]:self.ptr[i + 1]]

    @property
    def size(self):
        return int(self.triples.shape[0])


def build_resonant_table(d, M_cut):
    """Exact resonant table by integer arithmetic.

    Entry (s1, s2) belongs to site s when s3 = s1 + s2 - s is on the grid,
    (s1 - s) . (s2 - s) = 0 and {s1, s2} != {s3, s}.  The last condition
    then implies {s1, s2} and {s3, s} are disjoint, which is asserted.
    """
    if M_cut < 1:
        raise ValueError("M_cut must be >= 1")
    grid = SiteGrid(d, M_cut)
    S = grid.sites
    n = S.shape[0]
    ptr = [0]
    trip = []
    for i in range(n):
        s = S[i]
        z = S - s  # z1 candidates, aligned with site index
        dots = z @ z.T
        i1, i2 = np.nonzero(dots == 0)
        s3 = S[i1] + S[i2] - s
        on = np.all(np.abs(s3) <= M_cut, axis=1)
        i1, i2, s3 = i1[on], i2[on], s3[on]
        idx3 = np.array([grid.index(x) for x in s3], dtype=np.int64)
        same = ((i1 == idx3) & (i2 == i)) | ((i1 == i) & (i2 == idx3))
        keep = ~same
        i1, i2, idx3 = i1[keep], i2[keep], idx3[keep]
        assert not np.any((i1 == i) | (i2 == i) | (i1 == idx3) | (i2 == idx3))
        trip.append(np.stack([i1, i2, idx3], axis=1))
        ptr.append(ptr[-1] + len(i1))
    triples = np.concatenate(trip) if trip else np.zeros((0, 3), dtype=np.int64)
    return ResonantTable(grid, np.array(ptr, dtype=np.int64), triples.astype(np.int64))


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with standard error = sample std / sqrt(count)."""

    mean: complex | float
    stderr: float
    count: int
    seed: int

    def zscore(self, ref=0.0):
        """|mean - ref| / stderr."""
        return np.abs(np.asarray(self.mean) - ref) / np.asarray(self.stderr)


def mc_estimate(samples, seed=0):
    """McEstimate of real samples along axis 0 (complex samples: real and imaginary parts separately)."""
    x = np.asarray(samples)
    n = x.shape[0]
    if np.iscomplexobj(x):
        re = mc_estimate(x.real, seed)
        im = mc_estimate(x.imag, seed)
        return (re, im)
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(n)
    return McEstimate(mean, se, n, seed)


def _rates(params: ModelParams, grid: SiteGrid):
    s = grid.sites / params.L
    y = np.sum(s * s, axis=1)
    g = gamma_of_sq(y, params.r_star)
    B = params.forcing.of_sq(y) ** 2 / g
    return g, B


def ou_step(a, h, gamma, B, rng):
    """Exact update a <- e^{-gamma h} a + eta, eta circular with E|eta|^2 = B (1 - e^{-2 gamma h})."""
    if h <= 0:
        raise ValueError("h must be positive")
    a = np.asarray(a, dtype=complex)
    var = B * (-np.expm1(-2 * gamma * h))
    sd = np.sqrt(var / 2)
    eta = sd * (rng.standard_normal(a.shape) + 1j * rng.standard_normal(a.shape))
    return np.exp(-gamma * h) * a + eta


def exp_trapezoid_weights(gamma, h):
    """Weights (w0, w1) with int_0^h e^{-gamma (h - u)} f(u) du ~ w0 f(0) + w1 f(h) for linear f."""
    g = np.asarray(gamma, dtype=float)
    x = g * h
    em = -np.expm1(-x)  # 1 - e^{-x}
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    # w1 = h (x - 1 + e^{-x}) / x^2, w0 = h (1 - e^{-x}) / x - w1
    w1 = np.where(small, h * (0.5 - x / 6 + x * x / 24), h * (xs - em) / xs**2)
    w0 = np.where(small, h * (0.5 - x / 3 + x * x / 8), h * em / xs - w1)
    return w0, w1


@numba.njit(cache=True)
def _Y(a, b, c, ptr, trip, out):
    # out_s = sum over table of a_1 b_2 conj(c_3)
    for i in range(ptr.size - 1):
        acc = 0j
        for k in range(ptr[i], ptr[i + 1]):
            acc += a[trip[k, 0]] * b[trip[k, 1]] * np.conj(c[trip[k, 2]])
        out[i] = acc


@numba.njit(cache=True)
def _Y2(a0, a1, ptr, trip, out):
    # sum of the three placements of a^(1)
    for i in range(ptr.size - 1):
        acc = 0j
        for k in range(ptr[i], ptr[i + 1]):
            i1, i2, i3 = trip[k, 0], trip[k, 1], trip[k, 2]
            acc += (a1[i1] * a0[i2] * np.conj(a0[i3]) + a0[i1] * a1[i2] * np.conj(a0[i3])
                    + a0[i1] * a0[i2] * np.conj(a1[i3]))
        out[i] = acc


@numba.njit(cache=True)
def _run_chunk(noise, decay, sd, w0, w1, coef, ptr, trip, self_term, order, out):
    """Advance a^(0), a^(1), a^(2) along the noise of one chunk; store final values.

    noise has shape (S, n_steps, n_sites, 2); out has shape (S, 3, n_sites).
    """
    S, n_steps, n = noise.shape[0], noise.shape[1], noise.shape[2]
    a0 = np.zeros(n, np.complex128)
    a1 = np.zeros(n, np.complex128)
    a2 = np.zeros(n, np.complex128)
    Y1 = np.zeros(n, np.complex128)
    Y1n = np.zeros(n, np.complex128)
    Y2 = np.zeros(n, np.complex128)
    Y2n = np.zeros(n, np.complex128)
    for smp in range(S):
        for i in range(n):
            a0[i] = 0
            a1[i] = 0
            a2[i] = 0
            Y1[i] = 0
            Y2[i] = 0
        for st in range(n_steps):
            for i in range(n):
                a0[i] = decay[i] * a0[i] + sd[i] * (noise[smp, st, i, 0] + 1j * noise[smp, st, i, 1])
            if order >= 1:
                _Y(a0, a0, a0, ptr, trip, Y1n)
                if self_term:
                    for i in range(n):
                        Y1n[i] -= a0[i] * a0[i] * np.conj(a0[i])
            if order >= 2:
                # a^(1) at the right endpoint is needed inside the a^(2) integrand
                a1_new = np.empty(n, np.complex128)
                for i in range(n):
                    a1_new[i] = decay[i] * a1[i] + coef * (w0[i] * Y1[i] + w1[i] * Y1n[i])
                _Y2(a0, a1_new, ptr, trip, Y2n)
                if self_term:
                    for i in range(n):
                        Y2n[i] -= (2 * a0[i] * np.conj(a0[i]) * a1_new[i]
                                   + a0[i] * a0[i] * np.conj(a1_new[i]))
                for i in range(n):
                    a2[i] = decay[i] * a2[i] + coef * (w0[i] * Y2[i] + w1[i] * Y2n[i])
                    Y2[i] = Y2n[i]
                for i in range(n):
                    a1[i] = a1_new[i]
            elif order >= 1:
                for i in range(n):
                    a1[i] = decay[i] * a1[i] + coef * (w0[i] * Y1[i] + w1[i] * Y1n[i])
            for i in range(n):
                Y1[i] = Y1n[i]
        for i in range(n):
            out[smp, 0, i] = a0[i]
            out[smp, 1, i] = a1[i]
            out[smp, 2, i] = a2[i]


def simulate(params: ModelParams, M_cut=3, tau=None, h=0.02, n_samples=10_000, seed=0,
             order=1, variant="a", chunk=250, table=None):
    """Sample a^(0), a^(1), a^(2) at time tau on the truncated grid.

    Parameters
    ----------
    params : ModelParams
        d, L, r_star and forcing are used.
    tau : float, optional
        Final time; default 10 / min gamma, a proxy for tau = infinity.
    order : {0, 1, 2}
        Highest expansion order computed.
    variant : {'a', 'frak'}
        Without or with the cubic self-term.

    Returns
    -------
    dict with ``a`` of shape (n_samples, 3, n_sites), ``grid``, ``table``,
    ``gamma``, ``B``, ``tau``, ``h`` and ``flags``.
    """
    if variant not in ("a", "frak"):
        raise ValueError("variant must be 'a' or 'frak'")
    grid = SiteGrid(params.d, M_cut)
    table = build_resonant_table(params.d, M_cut) if table is None else table
    g, B = _rates(params, grid)
    if tau is None:
        tau = 10.0 / g.min()
    n_steps = int(round(tau / h))
    if n_steps < 1:
        raise ValueError("tau must be at least one step")
    h = tau / n_steps
    flags = []
    if h > 0.1:
        flags.append("path too coarse: h > 0.1")
        warnings.warn("path too coarse: h > 0.1")
    decay = np.exp(-g * h)
    sd = np.sqrt(B * (-np.expm1(-2 * g * h)) / 2)
    w0, w1 = exp_trapezoid_weights(g, h)
    # i L^{-d} prefactor of the Duhamel integrals
    coef = 1j * params.L ** (-params.d)
    out = np.empty((n_samples, 3, g.size), dtype=complex)
    for c, start in enumerate(range(0, n_samples, chunk)):
        S = min(chunk, n_samples - start)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, c])))
        noise = rng.standard_normal((S, n_steps, g.size, 2))
        _run_chunk(noise, decay, sd, w0, w1, coef, table.ptr, table.triples,
                   variant == "frak", int(order), out[start:start + S])
    return {"a": out, "grid": grid, "table": table, "gamma": g, "B": B, "tau": tau, "h": h,
            "flags": flags, "seed": seed}


def duhamel_a1(path0, h, gamma, table, L, d, variant="a"):
    """a^(1) at the end of a stored a^(0) path of shape (n_steps + 1, n_sites)."""
    return _duhamel(path0, None, h, gamma, table, L, d, variant, 1)


def duhamel_a2(path0, path1, h, gamma, table, L, d, variant="a"):
    """a^(2) at the end of stored a^(0), a^(1) paths (three placements of a^(1))."""
    return _duhamel(path0, path1, h, gamma, table, L, d, variant, 2)


def _duhamel(path0, path1, h, gamma, table, L, d, variant, order):
    path0 = np.asarray(path0, dtype=complex)
    if h > 0.1:
        warnings.warn("path too coarse: h > 0.1")
    w0, w1 = exp_trapezoid_weights(gamma, h)
    decay = np.exp(-gamma * h)
    coef = 1j * L ** (-d)
    n = path0.shape[1]
    acc = np.zeros(n, dtype=complex)
    prev = None
    for k in range(path0.shape[0]):
        Y = np.zeros(n, dtype=complex)
        if order == 1:
            _Y(path0[k], path0[k], path0[k], table.ptr, table.triples, Y)
            if variant == "frak":
                Y -= np.abs(path0[k]) ** 2 * path0[k]
        else:
            _Y2(path0[k], np.asarray(path1[k], dtype=complex), table.ptr, table.triples, Y)
            if variant == "frak":
                a0, a1 = path0[k], path1[k]
                Y -= 2 * np.abs(a0) ** 2 * a1 + a0 * a0 * np.conj(a1)
        if prev is not None:
            acc = decay * acc + coef * (w0 * prev + w1 * Y)
        prev = Y
    return acc


def spectrum_terms(sim, params: ModelParams, sites=None):
    """Estimates of n^(0..4) and of E|A|^2 for the given site indices.

    n^(k) = (L chi_d)^k sum_{k1 + k2 = k} E a^(k1) conj(a^(k2)), so that
    E|A|^2 = sum_k eps^k n^(k) holds sample by sample.
    """
    a = sim["a"]
    if sites is not None:
        a = a[:, :, sites]
    lam = params.L * chi_d(params.L, params.d)
    a0, a1, a2 = a[:, 0], a[:, 1], a[:, 2]
    terms = [
        np.abs(a0) ** 2,
        lam * 2 * np.real(a1 * np.conj(a0)),
        lam**2 * (np.abs(a1) ** 2 + 2 * np.real(a2 * np.conj(a0))),
        lam**3 * 2 * np.real(a2 * np.conj(a1)),
        lam**4 * np.abs(a2) ** 2,
    ]
    rho = params.epsilon * lam
    A = a0 + rho * a1 + rho**2 * a2
    seed = sim.get("seed", 0)
    return {
        "n": [mc_estimate(t, seed) for t in terms],
        "total": mc_estimate(np.abs(A) ** 2, seed),
        "decomposed": mc_estimate(sum(params.epsilon**k * t for k, t in enumerate(terms)), seed),
    }


def closed_form_a1_inf(params: ModelParams, table: ResonantTable, i):
    """(2 L^{-2d} / gamma_s) sum_table B1 B2 B3 / (gamma_1 + gamma_2 + gamma_3 + gamma_s)."""
    g, B = _rates(params, table.grid)
    t = table.entries(i)
    if t.size == 0:
        return 0.0
    val = np.sum(B[t[:, 0]] * B[t[:, 1]] * B[t[:, 2]] / (g[t[:, 0]] + g[t[:, 1]] + g[t[:, 2]] + g[i]))
    return float(2 * params.L ** (-2 * params.d) / g[i] * val)


def effective_sde_step(a, h, rho, gamma, B, table, L, d, rng, variant="frak"):
    """One step of d a = (-gamma a + i rho Y(a)) dtau + b dbeta.

    The linear and noise parts use the exact OU update; the resonant
    nonlinearity is explicit and integrated against e^{-gamma (h - u)}.
    """
    a = np.asarray(a, dtype=complex)
    Y = np.zeros_like(a)
    _Y(a, a, a, table.ptr, table.triples, Y)
    if variant == "frak":
        Y -= np.abs(a) ** 2 * a
    Y *= L ** (-d)
    new = ou_step(a, h, gamma, B, rng) + 1j * rho * (-np.expm1(-gamma * h)) / gamma * Y
    if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > 1e6 * max(1.0, np.max(np.abs(a))):
        raise FloatingPointError("step size too large")
    return new
