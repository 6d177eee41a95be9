"""Diagrams for the expansion coefficients and Feynman diagrams for their moments.

A diagram of D_m is a ternary tree of m blocks.  Block j carries the index
slots (xi_{2j-1}, xi_{2j}, sigma_{2j-1}, sigma_{2j}); in a block whose parent
is non-conjugated the virtual vertex is sigma_{2j} (layout c c cbar wbar),
otherwise it is xi_{2j} (layout c w cbar cbar).  The roots are xi_0 and
sigma_0, both equal to s.

A Feynman diagram pairs the non-conjugated leaves with the conjugated ones,
never inside one block.  Adding one dashed edge per block between a
non-conjugated and a conjugated vertex turns the graph into a single cycle;
walking the cycle from xi_0 gives every index as s + A z, with
z_j = x_{2j-1} the difference along the dashed edge of xi_{2j-1}, and the
resonance form of block j becomes 2 z_j . (alpha z)_j.

Moments are assembled as

    E a^(m)_s(tau) conj(a^(n)_s(tau)) = L^{-dN} sum_F c_F sum_z Phi^F_s(tau, z),

with c_F = i^m (-i)^n and Phi^F the time integral of the block memory
factors times the Gaussian pair correlations.  Both moments are taken at
the same time tau.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .lattice import IncidenceMatrix, TestFunction, resonance_sum_N
from .model import ModelParams, gamma_of_sq

__all__ = [
    "Block",
    "Diagram",
    "FeynmanDiagram",
    "trees",
    "build_D",
    "count_D",
    "product_diagram",
    "wick_pairings",
    "feynman_set",
    "incidence_and_map",
    "all_parametrizations",
    "density",
    "correlation_sum",
    "correlation_sum_grid",
    "moment",
    "to_json",
    "render",
]


# ---------------------------------------------------------------------------
# trees and diagrams

@lru_cache(maxsize=None)
def trees(m):
    """All ternary trees with m internal nodes; a leaf is None, a node a 3-tuple."""
    if m == 0:
        return (None,)
    out = []
    for m1 in range(m):
        for m2 in range(m - m1):
            m3 = m - 1 - m1 - m2
            for t in itertools.product(trees(m1), trees(m2), trees(m3)):
                out.append(t)
    return tuple(out)


def _size(t):
    return 0 if t is None else 1 + sum(_size(c) for c in t)


@lru_cache(maxsize=None)
def count_D(m):
    """|D_m| from the recurrence sum |D_m1| |D_m2| |D_m3| over m1 + m2 + m3 = m - 1."""
    if m == 0:
        return 1
    return sum(count_D(a) * count_D(b) * count_D(m - 1 - a - b)
               for a in range(m) for b in range(m - a))


# vertices are ('x', i) for xi_i and ('s', i) for sigma_i
@dataclass(frozen=True)
class Block:
    """Block j: parent vertex, conjugation of the parent, degrees of the three real slots.

    For a non-conjugated parent the real slots are (xi_{2j-1}, xi_{2j}, sigma_{2j-1});
    for a conjugated parent they are (sigma_{2j-1}, sigma_{2j}, xi_{2j-1}).
    """

    j: int
    conj: bool
    parent: tuple
    degrees: tuple

    @property
    def real(self):
        j = self.j
        if self.conj:
            return (("s", 2 * j - 1), ("s", 2 * j), ("x", 2 * j - 1))
        return (("x", 2 * j - 1), ("x", 2 * j), ("s", 2 * j - 1))

    @property
    def virtual(self):
        return ("x", 2 * self.j) if self.conj else ("s", 2 * self.j)

    @property
    def vertices(self):
        j = self.j
        return (("x", 2 * j - 1), ("x", 2 * j), ("s", 2 * j - 1), ("s", 2 * j))

    @property
    def factor(self):
        return -1j if self.conj else 1j


@dataclass(frozen=True)
class Diagram:
    """Blocks numbered from the top, left to right; ``conj`` marks D-bar."""

    m: int
    conj: bool
    blocks: tuple
    tree: object = None

    def __post_init__(self):
        assert len(self.blocks) == self.m
        virt = [b.virtual for b in self.blocks]
        assert len(set(b.parent for b in self.blocks)) == self.m
        assert len(set(virt)) == self.m


def _from_tree(tree, conj, offset=0):
    """Number blocks breadth first; block j + offset, root xi_0 or sigma_0."""
    root = ("s", 0) if conj else ("x", 0)
    blocks = []
    queue = [(tree, root, conj)]
    while queue:
        t, parent, pconj = queue.pop(0)
        if t is None:
            continue
        j = offset + len(blocks) + 1
        degs = tuple(_size(c) for c in t)
        b = Block(j, pconj, parent, degs)
        blocks.append(b)
        # child of a real slot has the conjugation of that slot
        for vert, child in zip(b.real, t):
            queue.append((child, vert, vert[0] == "s"))
    return tuple(blocks)


def build_D(m, conj=False):
    """The set D_m (or its conjugate) as a list of diagrams."""
    if m < 0:
        raise ValueError("m must be >= 0")
    return [Diagram(m, conj, _from_tree(t, conj), t) for t in trees(m)]


@dataclass(frozen=True)
class ProductDiagram:
    """D1 (blocks 1..m) next to conjugated D2 (blocks m+1..m+n)."""

    m: int
    n: int
    blocks: tuple

    @property
    def N(self):
        return self.m + self.n

    def degree(self):
        """Degree of every real vertex; a vertex is a parent iff its degree is positive."""
        deg = {("x", 0): self.m, ("s", 0): self.n}
        for b in self.blocks:
            for v, k in zip(b.real, b.degrees):
                deg[v] = k
        return deg

    def block_of(self):
        where = {("x", 0): "root", ("s", 0): "rootbar"}
        for b in self.blocks:
            for v in b.vertices:
                where[v] = b.j
        return where

    def leaves(self):
        deg = self.degree()
        return ([v for v, k in deg.items() if k == 0 and v[0] == "x"],
                [v for v, k in deg.items() if k == 0 and v[0] == "s"])


def product_diagram(D1: Diagram, D2: Diagram):
    if D1.conj or not D2.conj:
        raise ValueError("expected a diagram of D_m and one of conj D_n")
    blocks2 = _from_tree(D2.tree, True, offset=D1.m)
    return ProductDiagram(D1.m, D2.m, D1.blocks + blocks2)


@dataclass(frozen=True)
class FeynmanDiagram:
    """Product diagram with a pairing of its leaves.

    ``pairs`` lists (non-conjugated leaf, conjugated leaf).
    """

    D: ProductDiagram
    pairs: tuple

    @property
    def N(self):
        return self.D.N

    @property
    def c(self):
        return (1j) ** self.D.m * (-1j) ** self.D.n

    def solid(self):
        """Partner of every vertex along the solid edges (parent edges and pairs)."""
        p = {}
        for b in self.D.blocks:
            p[b.parent] = b.virtual
            p[b.virtual] = b.parent
        for u, v in self.pairs:
            p[u] = v
            p[v] = u
        return p


def wick_pairings(D: ProductDiagram):
    """All pairings of non-conjugated with conjugated leaves across blocks."""
    xs, ss = D.leaves()
    where = D.block_of()
    if len(xs) != len(ss):
        return []
    out = []

    def rec(i, used, acc):
        if i == len(xs):
            out.append(FeynmanDiagram(D, tuple(acc)))
            return
        for k, v in enumerate(ss):
            if k in used or where[v] == where[xs[i]]:
                continue
            rec(i + 1, used | {k}, acc + [(xs[i], v)])

    rec(0, frozenset(), [])
    return out


def feynman_set(m, n):
    """F_{m,n}: all Feynman diagrams of all products D1 x conj D2."""
    out = []
    for D1 in build_D(m):
        for D2 in build_D(n, conj=True):
            out.extend(wick_pairings(product_diagram(D1, D2)))
    return out


# ---------------------------------------------------------------------------
# cycle parametrisation

@dataclass(frozen=True)
class Parametrization:
    """xi = s + A z, sigma = s + S z and the incidence matrix alpha."""

    A: np.ndarray
    S: np.ndarray
    alpha: np.ndarray
    choice: tuple


def _walk(F: FeynmanDiagram, choice):
    N = F.N
    solid = F.solid()
    dashed, xsign = {}, {}
    for b, c in zip(F.D.blocks, choice):
        j = b.j
        x1, x2, s1, s2 = b.vertices
        if c == 0:
            pairs = ((x1, s1), (x2, s2))
        else:
            pairs = ((x1, s2), (x2, s1))
        for u, v in pairs:
            dashed[u] = v
            dashed[v] = u
        xsign[x1] = (j, 1)
        xsign[x2] = (j, -1)
    val = {}
    cur = ("x", 0)
    vec = np.zeros(N, dtype=np.int64)
    val[cur] = vec.copy()
    while True:
        nxt = solid[cur]
        val[nxt] = vec.copy()
        if nxt == ("s", 0):
            break
        # conjugated vertex: cross its dashed edge to xi_q = sigma + x_q
        q = dashed[nxt]
        j, sg = xsign[q]
        vec = vec.copy()
        vec[j - 1] += sg
        if q in val:
            return None
        val[q] = vec.copy()
        cur = q
    if len(val) != 4 * N + 2:
        return None
    A = np.array([val[("x", i)] for i in range(2 * N + 1)], dtype=np.int64)
    S = np.array([val[("s", i)] for i in range(2 * N + 1)], dtype=np.int64)
    alpha = np.zeros((N, N), dtype=np.int64)
    for b, c in zip(F.D.blocks, choice):
        j = b.j
        # (alpha z)_j = xi_{2j-1} minus its partner that is not joined by the dashed edge
        other = 2 * j if c == 0 else 2 * j - 1
        alpha[j - 1] = A[2 * j - 1] - S[other]
    return Parametrization(A, S, alpha, tuple(choice))


def all_parametrizations(F: FeynmanDiagram):
    """Every dashed-edge choice that closes a single cycle."""
    out = []
    for choice in itertools.product((0, 1), repeat=F.N):
        p = _walk(F, choice)
        if p is not None:
            out.append(p)
    return out


def incidence_and_map(F: FeynmanDiagram):
    """(alpha^F, A^F, c_F) from the first dashed-edge choice that closes a cycle."""
    if F.N == 0:
        return np.zeros((0, 0), np.int64), np.zeros((1, 0), np.int64), F.c
    for choice in itertools.product((0, 1), repeat=F.N):
        p = _walk(F, choice)
        if p is not None:
            a = p.alpha
            if not (np.array_equal(a, -a.T) and np.all(np.abs(a) <= 1)):
                raise RuntimeError("incidence matrix is not skew with entries in {-1, 0, 1}")
            return a, p.A, F.c
    raise RuntimeError("no dashed-edge choice closes a cycle")


def parametrization(F: FeynmanDiagram):
    incidence_and_map(F)
    return all_parametrizations(F)[0]


def is_true(F: FeynmanDiagram):
    """F has an admissible index set iff alpha^F has no zero row."""
    if F.N == 0:
        return True
    return bool(np.all(np.any(incidence_and_map(F)[0] != 0, axis=1)))


def omega_direct(P: Parametrization, F: FeynmanDiagram, s, z):
    """Resonance forms |xi_{2j-1}|^2 + |xi_{2j}|^2 - |sigma_{2j-1}|^2 - |sigma_{2j}|^2 for z of shape (..., N, d)."""
    xi = s + np.einsum("ri,...id->...rd", P.A, z)
    sg = s + np.einsum("ri,...id->...rd", P.S, z)
    q = lambda v: np.sum(v * v, axis=-1)
    return np.stack([q(xi[..., 2 * j - 1, :]) + q(xi[..., 2 * j, :])
                     - q(sg[..., 2 * j - 1, :]) - q(sg[..., 2 * j, :])
                     for j in range(1, F.N + 1)], axis=-1)


def omega_alpha(P: Parametrization, z):
    az = np.einsum("ji,...id->...jd", P.alpha, z)
    return 2 * np.sum(z * az, axis=-1)


# ---------------------------------------------------------------------------
# densities

def _times(F: FeynmanDiagram):
    """Time slot of every vertex: None for the roots (time tau), else the block number."""
    t = {("x", 0): None, ("s", 0): None}
    for b in F.D.blocks:
        for v in b.vertices:
            t[v] = b.j
    return t


@lru_cache(maxsize=None)
def _orderings_cached(N, parent_blocks):
    out = []
    for perm in itertools.permutations(range(1, N + 1)):
        pos = {j: k for k, j in enumerate(perm)}
        if all(p is None or pos[j] < pos[p] for j, p in zip(range(1, N + 1), parent_blocks)):
            out.append(perm)
    return tuple(out)


def _orderings(F: FeynmanDiagram):
    """Increasing time orders of the blocks with every block earlier than its parent block."""
    tm = _times(F)
    parents = tuple(tm[b.parent] for b in F.D.blocks)
    return _orderings_cached(F.N, parents)


def _simplex_exp(c, tau):
    """int over 0 <= t_1 <= ... <= t_N <= tau of exp(sum_k c_k t_k); c of shape (K, N).

    Uses the upper bidiagonal matrix with diagonal d_{k-1} = c_k + ... + c_N,
    d_N = 0: the corner entry of expm(M tau) is the iterated integral.
    """
    K, N = c.shape
    if N == 0:
        return np.ones(K)
    dg = np.zeros((K, N + 1))
    dg[:, :N] = np.cumsum(c[:, ::-1], axis=1)[:, ::-1]
    M = np.zeros((K, N + 1, N + 1))
    idx = np.arange(N + 1)
    M[:, idx, idx] = dg * tau
    M[:, idx[:-1], idx[1:]] = tau
    # the corner of expm(tau (D + J)) carries tau^N from the superdiagonal scaling
    return expm(M)[:, 0, N]


def density(F: FeynmanDiagram, params: ModelParams, s, z, tau, P: Parametrization = None):
    """Phi^F_s(tau, tau, z) for z of shape (K, N, d) in frequency units.

    Integrates over block times l_j in [0, tau] with l_j below the time of
    its parent; the integrand is the product of e^{-gamma_p (t_p - l_j)}
    over blocks and of B_v (e^{-gamma_v |t_a - t_b|} - e^{-gamma_v (t_a + t_b)})
    over the pairs.
    """
    z = np.asarray(z, dtype=float)
    s = np.asarray(s, dtype=float)
    N = F.N
    K = z.shape[0] if N else 1
    if N == 0:
        g = gamma_of_sq(s @ s, params.r_star)
        B = params.forcing.of_sq(s @ s) ** 2 / g
        return np.full(K, B * -np.expm1(-2 * g * tau))
    P = parametrization(F) if P is None else P
    xi = s + np.einsum("ri,kid->krd", P.A, z)
    y = np.sum(xi * xi, axis=-1)  # (K, 2N+1)
    g = gamma_of_sq(y, params.r_star)
    B = params.forcing.of_sq(y) ** 2 / g
    tm = _times(F)
    solid = F.solid()
    # every index value lives on a non-conjugated vertex: map vertices to xi rows
    def row(v):
        return v[1] if v[0] == "x" else solid[v][1]

    # linear exponent pieces: constant (K,) and coefficients on block times (K, N)
    def lin(t, coef):
        c0 = np.zeros(K)
        c = np.zeros((K, N))
        if t is None:
            c0 = coef * tau
        else:
            c[:, t - 1] = coef
        return c0, c

    base0 = np.zeros(K)
    base = np.zeros((K, N))
    for b in F.D.blocks:
        gp = g[:, row(b.parent)]
        a0, a = lin(tm[b.parent], -gp)
        base0 += a0
        base[:, b.j - 1] += gp
        base += a
    pair_terms = []
    for u, v in F.pairs:
        r = row(u)
        pair_terms.append((r, tm[u], tm[v]))
    total = np.zeros(K)
    for order in _orderings(F):
        pos = {j: k for k, j in enumerate(order)}
        for pick in itertools.product((0, 1), repeat=len(pair_terms)):
            c0 = base0.copy()
            c = base.copy()
            sign = 1.0
            amp = np.ones(K)
            for (r, ta, tb), p in zip(pair_terms, pick):
                gv = g[:, r]
                amp = amp * B[:, r]
                if p == 0:
                    # -gamma |ta - tb|: orient by the ordering (roots are latest)
                    ka = N if ta is None else pos[ta]
                    kb = N if tb is None else pos[tb]
                    hi, lo = (ta, tb) if ka >= kb else (tb, ta)
                    x0, x = lin(hi, -gv)
                    y0, yv = lin(lo, gv)
                    c0 += x0 + y0
                    c += x + yv
                else:
                    sign = -sign
                    x0, x = lin(ta, -gv)
                    y0, yv = lin(tb, -gv)
                    c0 += x0 + y0
                    c += x + yv
            cs = c[:, list(np.array(order) - 1)]
            total += sign * amp * np.exp(c0) * _simplex_exp(cs, tau)
    return total


# ---------------------------------------------------------------------------
# correlation sums

def correlation_sum(F: FeynmanDiagram, params: ModelParams, s, tau, box=None, method="auto"):
    """J_s(F) = L^{N(1-d)} sum over z in Z(F) with omega_j(z) = 0 of Phi^F_s.

    Delegates to :func:`resonance_sum_N`; returns exactly 0 when F is not true.
    """
    N = F.N
    if N == 0:
        return float(density(F, params, s, np.zeros((1, 0, params.d)), tau)[0])
    alpha, A, _ = incidence_and_map(F)
    if not np.all(np.any(alpha != 0, axis=1)):
        return 0.0
    P = parametrization(F)
    radius = 8.0 * params.sigma * math.sqrt(N) if math.isfinite(params.sigma) else 6.0

    def func(z):
        sh = z.shape[:-2]
        out = density(F, params, s, z.reshape((-1, N, params.d)), tau, P)
        return out.reshape(sh)

    phi = TestFunction(func, params.d, N, radius=radius)
    box = radius if box is None else box
    return resonance_sum_N(phi, IncidenceMatrix(alpha), params.L, box=box, d2_lognorm=False,
                           method=method)


def _grid_z(d, N, span):
    r = np.arange(-span, span + 1)
    pts = np.array(list(itertools.product(r, repeat=d)), dtype=np.int64)
    for combo in itertools.product(range(len(pts)), repeat=N):
        yield pts[list(combo)]


def correlation_sum_grid(F: FeynmanDiagram, params: ModelParams, m_s, tau, M_cut, P=None):
    """Sum of Phi^F over z with every index on the truncated grid |L xi|_inf <= M_cut.

    Returns L^{-dN} sum_z Phi, the contribution of F to the moment before c_F.
    """
    N, d, L = F.N, params.d, params.L
    m_s = np.asarray(m_s, dtype=np.int64)
    s = m_s / L
    if N == 0:
        return float(density(F, params, s, np.zeros((1, 0, d)), tau)[0])
    if not is_true(F):
        return 0.0
    P = parametrization(F) if P is None else P
    r = np.arange(-2 * M_cut, 2 * M_cut + 1)
    pts = np.array(list(itertools.product(r, repeat=d)), dtype=np.int64)
    idx = np.array(list(itertools.product(range(len(pts)), repeat=N)), dtype=np.int64)
    Z = pts[idx]  # (K, N, d) integer
    xi = m_s + np.einsum("ri,kid->krd", P.A, Z)
    sg = m_s + np.einsum("ri,kid->krd", P.S, Z)
    ok = np.all(np.abs(xi) <= M_cut, axis=(1, 2)) & np.all(np.abs(sg) <= M_cut, axis=(1, 2))
    az = np.einsum("ji,kid->kjd", P.alpha, Z)
    ok &= np.all(np.any(Z != 0, axis=2), axis=1) & np.all(np.any(az != 0, axis=2), axis=1)
    ok &= np.all(np.sum(Z * az, axis=2) == 0, axis=1)
    Z = Z[ok]
    if Z.shape[0] == 0:
        return 0.0
    vals = density(F, params, s, Z / L, tau, P)
    return float(np.sum(vals) * L ** (-d * N))


def moment(m, n, params: ModelParams, m_s, tau, M_cut=None, box=None):
    """E a^(m)_s(tau) conj(a^(n)_s(tau)) assembled from all true Feynman diagrams.

    With ``M_cut`` the indices are restricted to the truncated grid (as in
    the Monte Carlo); otherwise the full lattice is summed via the
    resonance-sum module.
    """
    total = 0j
    L, d = params.L, params.d
    for F in feynman_set(m, n):
        if M_cut is not None:
            J = correlation_sum_grid(F, params, m_s, tau, M_cut)
        else:
            s = np.asarray(m_s, float) / L
            J = correlation_sum(F, params, s, tau, box=box) * L ** (-F.N) if F.N else \
                correlation_sum(F, params, s, tau)
        total += F.c * J
    return total


# ---------------------------------------------------------------------------
# export

def _vname(v):
    return ("xi" if v[0] == "x" else "sigma") + str(v[1])


def to_json(F: FeynmanDiagram):
    """JSON text with blocks, pairing, alpha, A and c_F."""
    alpha, A, c = incidence_and_map(F)
    data = {
        "m": F.D.m,
        "n": F.D.n,
        "blocks": [{"j": b.j, "conj": b.conj, "parent": _vname(b.parent),
                    "virtual": _vname(b.virtual), "degrees": list(b.degrees)}
                   for b in F.D.blocks],
        "pairs": [[_vname(u), _vname(v)] for u, v in F.pairs],
        "alpha": alpha.tolist(),
        "A": A.tolist(),
        "c": [c.real, c.imag],
    }
    return json.dumps(data)


def render(F: FeynmanDiagram):
    """Plain text rendering, one line per block and one for the pairing."""
    lines = [f"F in F_({F.D.m},{F.D.n}), c_F = {F.c}"]
    for b in F.D.blocks:
        slots = []
        for v in b.vertices:
            tag = _vname(v)
            if v == b.virtual:
                tag = "w:" + tag
            slots.append(tag)
        lines.append(f"  block {b.j} ({'conj' if b.conj else 'plain'}) parent {_vname(b.parent)}: "
                     + " ".join(slots))
    lines.append("  pairs: " + ", ".join(f"{_vname(u)}-{_vname(v)}" for u, v in F.pairs))
    alpha = incidence_and_map(F)[0]
    lines.append("  alpha: " + str(alpha.tolist()))
    return "\n".join(lines)
