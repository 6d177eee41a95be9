"""Integer points on resonance quadrics and the normalised sums over them.

Frequencies live on the lattice L^{-1} Z^d and are handled through their
integer numerators m, so every orthogonality test is exact.  The main
objects are

* the sublattice orthogonal to an integer vector and its enumeration,
* S_{L,2} = L^{2(1-d)} sum_{z1 . z2 = 0} Phi(z),
* S_{L,N} = L^{N(1-d)} sum over z with z_j . (alpha z)_j = 0 for all j,
* counts of integer points on the auxiliary quadric systems q_j and
  their reductions over prime fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, permutations, product

import numba
import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "lll_reduce",
    "orthogonal_basis",
    "enumerate_orthogonal",
    "count_resonant_pairs",
    "IncidenceMatrix",
    "cyclic_alpha",
    "TestFunction",
    "gaussian_test",
    "resonance_sum_2",
    "radial_pair_sum",
    "pair_norm_histogram",
    "resonance_sum_N",
    "quadric_polynomials",
    "quadric_intersection_count",
    "intersection_bound",
    "finite_field_count",
    "is_prime",
]


# ---------------------------------------------------------------------------
# orthogonal sublattices

def lll_reduce(basis, delta=0.75):
    """LLL reduction of the rows of a small integer basis."""
    b = [np.array(r, dtype=np.int64) for r in np.asarray(basis)]
    n = len(b)
    if n <= 1:
        return np.array(b, dtype=np.int64).reshape(n, -1)

    def gso(b):
        bs, mu = [], np.zeros((n, n))
        for i in range(n):
            v = b[i].astype(float)
            for j in range(i):
                mu[i, j] = b[i] @ bs[j] / (bs[j] @ bs[j])
                v = v - mu[i, j] * bs[j]
            bs.append(v)
        return bs, mu

    bs, mu = gso(b)
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            q = int(round(mu[k, j]))
            if q:
                b[k] = b[k] - q * b[j]
                bs, mu = gso(b)
        if bs[k] @ bs[k] >= (delta - mu[k, k - 1] ** 2) * (bs[k - 1] @ bs[k - 1]):
            k += 1
        else:
            b[k], b[k - 1] = b[k - 1], b[k]
            bs, mu = gso(b)
            k = max(k - 1, 1)
    return np.array(b, dtype=np.int64)


def orthogonal_basis(m):
    """LLL-reduced basis (rows) of {x in Z^d : x . m = 0}.

    Column operations bring m to (g, 0, ..., 0) through a unimodular U;
    the columns of U matched to zero entries span the kernel.
    """
    a = np.array(m, dtype=np.int64).ravel()
    d = a.size
    if not np.any(a):
        raise ValueError("m = 0: the orthogonal sublattice is all of Z^d")
    U = np.eye(d, dtype=np.int64)
    while np.count_nonzero(a) > 1:
        nz = np.flatnonzero(a)
        piv = nz[np.argmin(np.abs(a[nz]))]
        for i in nz:
            if i != piv:
                q = a[i] // a[piv]
                a[i] -= q * a[piv]
                U[:, i] -= q * U[:, piv]
    piv = int(np.flatnonzero(a)[0])
    ker = np.array([U[:, i] for i in range(d) if i != piv], dtype=np.int64)
    if d == 1:
        return ker.reshape(0, 1)
    return lll_reduce(ker)


def _coefficient_bounds(B, radius):
    G = (B @ B.T).astype(float)
    Ginv = np.linalg.inv(G)
    return np.floor(radius * np.sqrt(np.diag(Ginv)) + 1e-9).astype(np.int64)


def _lattice_points(B, radius):
    """All integer combinations x = c B with |x|_2 <= radius."""
    k = B.shape[0]
    if k == 0:
        return np.zeros((1, B.shape[1]), dtype=np.int64)
    cb = _coefficient_bounds(B, radius)
    grids = np.meshgrid(*[np.arange(-c, c + 1) for c in cb], indexing="ij")
    C = np.stack([g.ravel() for g in grids], axis=1)
    X = C @ B
    keep = np.einsum("ij,ij->i", X, X) <= radius * radius + 1e-9
    return X[keep]


def enumerate_orthogonal(m, M):
    """Integer x with x . m = 0 and 0 < |x|_inf <= M, each once, sorted."""
    m = np.asarray(m, dtype=np.int64).ravel()
    if M < 0:
        raise ValueError("box radius must be nonnegative")
    d = m.size
    if M == 0:
        return np.zeros((0, d), dtype=np.int64)
    B = orthogonal_basis(m)
    X = _lattice_points(B, M * math.sqrt(d))
    keep = (np.abs(X).max(axis=1) <= M) & np.any(X != 0, axis=1)
    X = X[keep]
    order = np.lexsort(X.T[::-1])
    return X[order]


def count_resonant_pairs(d, M):
    """Number of ordered pairs (m1, m2), both nonzero, |m_i|_inf <= M, m1 . m2 = 0."""
    if M <= 0:
        return 0
    total = 0
    for m1 in product(range(-M, M + 1), repeat=d):
        if any(m1):
            total += len(enumerate_orthogonal(m1, M))
    return total


# ---------------------------------------------------------------------------
# incidence matrices

@dataclass(frozen=True)
class IncidenceMatrix:
    """Skew-symmetric N x N matrix with entries in {-1, 0, 1}."""

    alpha: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.alpha, dtype=np.int64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
            raise ValueError("incidence matrix must be square with N >= 2")
        if not np.array_equal(a, -a.T):
            raise ValueError("incidence matrix must be skew-symmetric")
        if np.any(np.abs(a) > 1):
            raise ValueError("entries must lie in {-1, 0, 1}")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @property
    def N(self):
        return self.alpha.shape[0]

    @property
    def no_zero_rows(self):
        return bool(np.all(np.any(self.alpha != 0, axis=1)))

    def components(self):
        """Connected components of the support graph (the irreducible blocks)."""
        N = self.N
        seen, comps = set(), []
        for start in range(N):
            if start in seen:
                continue
            stack, comp = [start], []
            seen.add(start)
            while stack:
                i = stack.pop()
                comp.append(i)
                for k in np.flatnonzero(self.alpha[i]):
                    if k not in seen:
                        seen.add(int(k))
                        stack.append(int(k))
            comps.append(sorted(comp))
        return comps

    @property
    def irreducible(self):
        return len(self.components()) == 1

    def apply(self, z):
        """(alpha z)_j for polyvectors z of shape (..., N, d)."""
        return np.einsum("ji,...id->...jd", self.alpha, np.asarray(z))

    def omega(self, z):
        """The forms omega_j(z) = z_j . (alpha z)_j, shape (..., N)."""
        z = np.asarray(z)
        return np.einsum("...jd,...jd->...j", z, self.apply(z))

    def normalized(self):
        """Relabel and flip signs so that alpha[0, N-1] = 1.

        Returns the new matrix and the permutation ``perm`` with
        new index k corresponding to old index perm[k].  A sign flip
        of a variable conjugates alpha by a diagonal of +-1 and leaves
        the zero set of the forms unchanged.
        """
        a = self.alpha
        N = self.N
        rows, cols = np.nonzero(a)
        if rows.size == 0:
            raise ValueError("zero incidence matrix")
        i, k = int(rows[0]), int(cols[0])
        perm = [i] + [t for t in range(N) if t not in (i, k)] + [k]
        b = a[np.ix_(perm, perm)].copy()
        if b[0, N - 1] == -1:
            b[:, N - 1] *= -1
            b[N - 1, :] *= -1
        return IncidenceMatrix(b), perm


def cyclic_alpha(N):
    """alpha_{i,i+1} = 1 (indices mod N), alpha_{i+1,i} = -1."""
    if N < 3:
        a = np.zeros((2, 2), dtype=np.int64)
        a[0, 1], a[1, 0] = 1, -1
        return IncidenceMatrix(a)
    a = np.zeros((N, N), dtype=np.int64)
    for i in range(N):
        a[i, (i + 1) % N] = 1
        a[(i + 1) % N, i] = -1
    return IncidenceMatrix(a)


# ---------------------------------------------------------------------------
# test functions

@dataclass
class TestFunction:
    """A rapidly decaying weight Phi on (R^d)^N.

    Attributes
    ----------
    func : callable
        Maps z of shape (..., N, d) to values of shape (...).
    d, N : int
    radius : float
        |Phi(z)| is negligible once sum_i |z_i|^2 > radius^2.
    factors : (g, h) or None
        For N = 2 only: Phi(z1, z2) = prod_k g(z1_k) h(z2_k).
    radial : callable or None
        For N = 2 only: Phi(z1, z2) = radial(|z1|^2, |z2|^2).
    """

    __test__ = False  # not a pytest class

    func: object
    d: int
    N: int = 2
    radius: float = 6.0
    factors: tuple | None = None
    radial: object | None = None
    gaussian_scale: float | None = None

    def __call__(self, z):
        return self.func(np.asarray(z, dtype=float))

    def probe_decay(self, rng=None):
        """Reject weights whose tail is not summable.

        Along a few random rays the product |Phi(t e)| t^{d+1} has to be
        small at t = 2^12 compared to its peak.
        """
        rng = np.random.default_rng(0) if rng is None else rng
        dirs = rng.normal(size=(8, self.N, self.d))
        dirs /= np.linalg.norm(dirs.reshape(8, -1), axis=1)[:, None, None]
        t = 2.0 ** np.arange(-2, 13)
        vals = np.abs(self(t[:, None, None, None] * dirs[None]))  # (T, 8)
        w = vals * (1 + t[:, None]) ** (self.d + 1)
        peak = w.max()
        if not np.all(np.isfinite(w)):
            raise ValueError("nonconvergent tail: weight is not finite")
        if peak > 0 and w[-1].max() > 1e-8 * peak:
            raise ValueError("nonconvergent tail: weight decays too slowly")


def gaussian_test(d, N=2, scale=1.0, tail=1e-12):
    """Phi(z) = exp(-sum_i |z_i|^2 / scale^2), with a ball radius for the given tail."""
    s2 = float(scale) ** 2
    radius = scale * math.sqrt(-math.log(tail))

    def func(z):
        return np.exp(-np.sum(z * z, axis=(-1, -2)) / s2)

    def g(x):
        return np.exp(-np.asarray(x, dtype=float) ** 2 / s2)

    def rad(x, y):
        return np.exp(-(np.asarray(x) + np.asarray(y)) / s2)

    return TestFunction(
        func=func,
        d=d,
        N=N,
        radius=radius,
        factors=(g, g) if N == 2 else None,
        radial=rad if N == 2 else None,
        gaussian_scale=float(scale),
    )


def _lognorm(L, d, N, flag):
    if d == 2 and flag:
        return math.log(L) ** (-N / 2)
    return 1.0


# ---------------------------------------------------------------------------
# S_{L,2}

def _sum2_fft(phi, L, exclude_zeros):
    g, h = phi.factors
    P = int(math.ceil(phi.radius * L))
    a = np.arange(-P, P + 1)
    wg = g(a / L)
    wh = h(a / L)
    K = P * P
    dist = np.zeros(2 * K + 1)
    np.add.at(dist, np.outer(a, a).ravel() + K, np.outer(wg, wh).ravel())
    acc = dist
    for _ in range(phi.d - 1):
        acc = fftconvolve(acc, dist)
    total = acc[acc.size // 2]
    if exclude_zeros:
        tg, th = wg.sum(), wh.sum()
        g0, h0 = wg[P], wh[P]
        d = phi.d
        total -= (g0 * th) ** d + (h0 * tg) ** d - (g0 * h0) ** d
    return float(total)


def _fundamental_directions(d, P):
    """Primitive p with 0 <= p_1 <= ... <= p_d, |p|^2 <= P^2, and orbit sizes."""
    axes = [np.arange(P + 1)] * d
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    ok = np.all(np.diff(grid, axis=1) >= 0, axis=1)
    grid = grid[ok]
    grid = grid[(grid * grid).sum(axis=1) <= P * P]
    grid = grid[np.any(grid != 0, axis=1)]
    g = np.gcd.reduce(grid, axis=1)
    grid = grid[g == 1]
    w = np.empty(len(grid), dtype=np.int64)
    fact = math.factorial(d)
    for i, p in enumerate(grid):
        _, counts = np.unique(p, return_counts=True)
        perms = fact // math.prod(math.factorial(c) for c in counts)
        w[i] = perms * 2 ** int(np.count_nonzero(p))
    return grid.astype(np.int64), w


@numba.njit(cache=True)
def _extgcd(a, b):
    x0, x1, y0, y1 = 1, 0, 0, 1
    while b != 0:
        q = a // b
        a, b = b, a - q * b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    return a, x0, y0


@numba.njit(cache=True)
def _tri_index(n1, n2, P2):
    # packed index of (n1, n2) with n1 + n2 <= P2
    return n1 * (P2 + 1) - (n1 * (n1 - 1)) // 2 + n2


@numba.njit(cache=True)
def _pair_hist_d2(dirs, wts, P2, hist):
    for k in range(dirs.shape[0]):
        np2 = dirs[k, 0] * dirs[k, 0] + dirs[k, 1] * dirs[k, 1]
        g = 1
        while g * g * np2 <= P2:
            n1 = g * g * np2
            t = 1
            while n1 + t * t * np2 <= P2:
                # m2 = +-t p^perp
                hist[_tri_index(n1, t * t * np2, P2)] += 2 * wts[k]
                t += 1
            g += 1


@numba.njit(cache=True)
def _pair_hist_d3(dirs, wts, P2, hist):
    """Histogram of (|m1|^2, |m2|^2) over m1 = g p, m2 in p^perp (d = 3)."""
    for k in range(dirs.shape[0]):
        a, b, c = dirs[k, 0], dirs[k, 1], dirs[k, 2]
        np2 = a * a + b * b + c * c
        # basis of p^perp: u = (b, -a, 0)/g1, w = (-c x0, -c y0, g1)
        if a == 0 and b == 0:
            u0, u1, u2 = 1, 0, 0
            w0, w1, w2 = 0, 1, 0
        else:
            g1, x0, y0 = _extgcd(a, b)
            if g1 < 0:
                g1, x0, y0 = -g1, -x0, -y0
            u0, u1, u2 = b // g1, -a // g1, 0
            w0, w1, w2 = -c * x0, -c * y0, g1
        # Lagrange reduction
        while True:
            uu = u0 * u0 + u1 * u1 + u2 * u2
            ww = w0 * w0 + w1 * w1 + w2 * w2
            if ww < uu:
                u0, u1, u2, w0, w1, w2 = w0, w1, w2, u0, u1, u2
                uu, ww = ww, uu
            uw = u0 * w0 + u1 * w1 + u2 * w2
            q = int(np.floor(uw / uu + 0.5))
            if q == 0:
                break
            w0 -= q * u0
            w1 -= q * u1
            w2 -= q * u2
        uu = u0 * u0 + u1 * u1 + u2 * u2
        ww = w0 * w0 + w1 * w1 + w2 * w2
        uw = u0 * w0 + u1 * w1 + u2 * w2
        det = uu * ww - uw * uw
        rem = P2 - np2
        if rem <= 0:
            continue
        c1 = int(np.floor(np.sqrt(rem * ww / det) + 1e-9))
        c2 = int(np.floor(np.sqrt(rem * uu / det) + 1e-9))
        for i in range(-c1, c1 + 1):
            for j in range(-c2, c2 + 1):
                if i == 0 and j == 0:
                    continue
                n2 = i * i * uu + 2 * i * j * uw + j * j * ww
                g = 1
                while g * g * np2 + n2 <= P2:
                    hist[_tri_index(g * g * np2, n2, P2)] += wts[k]
                    g += 1


def pair_norm_histogram(d, P):
    """Multiplicities of (|m1|^2, |m2|^2) over nonzero m1 . m2 = 0, |m1|^2 + |m2|^2 <= P^2.

    Returns integer arrays (n1, n2, count).  Each m1 is written as g p
    with p primitive; p runs over a fundamental domain of the signed
    permutation group and carries its orbit size.
    """
    P = int(P)
    P2 = P * P
    dirs, wts = _fundamental_directions(d, P)
    hist = np.zeros((P2 + 1) * (P2 + 2) // 2, dtype=np.int64)
    if d == 2:
        _pair_hist_d2(dirs, wts, P2, hist)
    elif d == 3:
        _pair_hist_d3(dirs, wts, P2, hist)
    else:
        raise NotImplementedError("radial pair sums are implemented for d = 2, 3")
    idx = np.flatnonzero(hist)
    # invert the packed index
    n1 = np.empty(idx.size, dtype=np.int64)
    k = np.arange(P2 + 1, dtype=np.int64)
    rowstart = k * (P2 + 1) - (k * (k - 1)) // 2
    n1[:] = np.searchsorted(rowstart, idx, side="right") - 1
    n2 = idx - rowstart[n1]
    return n1, n2, hist[idx]


def radial_pair_sum(F, d, P, chunk=1 << 20):
    """sum over nonzero m1, m2 in Z^d with m1 . m2 = 0, |m1|^2 + |m2|^2 <= P^2 of F(|m1|^2, |m2|^2).

    F is called once per distinct pair of squared norms, in chunks.
    """
    n1, n2, w = pair_norm_histogram(d, P)
    parts = []
    for i in range(0, n1.size, chunk):
        sl = slice(i, i + chunk)
        vals = np.asarray(F(n1[sl].astype(float), n2[sl].astype(float)), dtype=float)
        parts.append(float(np.sum(w[sl] * vals)))
    return math.fsum(parts)


def _sum2_direct(phi, L, exclude_zeros):
    d = phi.d
    P = int(math.floor(phi.radius * L))
    R2 = (phi.radius * L) ** 2
    parts = []
    for m1 in product(range(-P, P + 1), repeat=d):
        m1 = np.array(m1)
        n1 = int(m1 @ m1)
        if n1 > R2:
            continue
        if n1 == 0:
            continue
        B = orthogonal_basis(m1)
        X = _lattice_points(B, math.sqrt(max(R2 - n1, 0.0)))
        X = X[np.any(X != 0, axis=1)]
        if X.size == 0:
            continue
        z = np.stack([np.broadcast_to(m1, X.shape), X], axis=1) / L
        parts.append(float(np.sum(phi(z))))
    if not exclude_zeros:
        pts = _lattice_points(np.eye(d, dtype=np.int64), math.sqrt(R2))
        zero = np.zeros_like(pts)
        parts.append(float(np.sum(phi(np.stack([zero, pts], axis=1) / L))))
        nz = pts[np.any(pts != 0, axis=1)]
        parts.append(float(np.sum(phi(np.stack([nz, np.zeros_like(nz)], axis=1) / L))))
    return math.fsum(parts)


def resonance_sum_2(phi, L, exclude_zeros=True, d2_lognorm=False, method="auto"):
    """S_{L,2} = L^{2(1-d)} sum_{z in (Z^d_L)^2, z1 . z2 = 0} Phi(z).

    Parameters
    ----------
    phi : TestFunction
        Weight with N = 2.
    L : float
        Period; frequencies are m / L.
    exclude_zeros : bool
        Drop the terms with z1 = 0 or z2 = 0.
    d2_lognorm : bool
        For d = 2 divide by ln L.
    method : {'auto', 'fft', 'radial', 'direct'}
        'fft' needs product factors, 'radial' needs a radial weight
        (and drops the zero terms), 'direct' loops over z1 and the
        sublattice orthogonal to it.
    """
    if phi.N != 2:
        raise ValueError("resonance_sum_2 needs a weight on pairs")
    if L < 2:
        raise ValueError("L must be >= 2")
    phi.probe_decay()
    d = phi.d
    if method == "auto":
        method = "fft" if phi.factors is not None else "direct"
    if method == "fft":
        total = _sum2_fft(phi, L, exclude_zeros)
    elif method == "radial":
        if not exclude_zeros:
            raise ValueError("the radial route drops the zero terms")
        P = int(math.floor(phi.radius * L))
        total = radial_pair_sum(lambda a, b: phi.radial(a / L**2, b / L**2), d, P)
    elif method == "direct":
        total = _sum2_direct(phi, L, exclude_zeros)
    else:
        raise ValueError(f"unknown method {method!r}")
    return total * L ** (2 * (1 - d)) * _lognorm(L, d, 2, d2_lognorm)


# ---------------------------------------------------------------------------
# S_{L,N}

@numba.njit(cache=True)
def _levels(alpha):
    N = alpha.shape[0]
    lv = np.empty(N, np.int64)
    for j in range(N):
        top = j
        for i in range(N):
            if alpha[j, i] != 0 and i > top:
                top = i
        lv[j] = top
    return lv


@numba.njit(cache=True)
def _candidates(k, z, alpha, lv, pts, norms, rem, mbox, buf, ea0, ea1, eb):
    """Admissible values of z_k given z_0..z_{k-1} (d = 2); returns count."""
    N = alpha.shape[0]
    ne = 0
    for j in range(N):
        if lv[j] != k:
            continue
        if j < k:
            a0 = alpha[j, k] * z[j, 0]
            a1 = alpha[j, k] * z[j, 1]
            s0 = 0
            s1 = 0
            for i in range(k):
                s0 += alpha[j, i] * z[i, 0]
                s1 += alpha[j, i] * z[i, 1]
            b = -(z[j, 0] * s0 + z[j, 1] * s1)
        else:
            a0 = 0
            a1 = 0
            for i in range(k):
                a0 += alpha[k, i] * z[i, 0]
                a1 += alpha[k, i] * z[i, 1]
            b = 0
        if a0 == 0 and a1 == 0:
            if b != 0:
                return 0
            continue
        ea0[ne] = a0
        ea1[ne] = a1
        eb[ne] = b
        ne += 1
    cnt = 0
    if ne == 0:
        for t in range(pts.shape[0]):
            if norms[t] > rem:
                break
            if norms[t] == 0:
                continue
            if abs(pts[t, 0]) > mbox or abs(pts[t, 1]) > mbox:
                continue
            buf[cnt, 0] = pts[t, 0]
            buf[cnt, 1] = pts[t, 1]
            cnt += 1
        return cnt
    # look for a second independent equation
    other = -1
    for e in range(1, ne):
        if ea0[0] * ea1[e] - ea1[0] * ea0[e] != 0:
            other = e
            break
    if other >= 0:
        det = ea0[0] * ea1[other] - ea1[0] * ea0[other]
        n0 = eb[0] * ea1[other] - ea1[0] * eb[other]
        n1 = ea0[0] * eb[other] - eb[0] * ea0[other]
        if n0 % det != 0 or n1 % det != 0:
            return 0
        x0 = n0 // det
        x1 = n1 // det
        if x0 == 0 and x1 == 0:
            return 0
        if x0 * x0 + x1 * x1 > rem or abs(x0) > mbox or abs(x1) > mbox:
            return 0
        for e in range(ne):
            if ea0[e] * x0 + ea1[e] * x1 != eb[e]:
                return 0
        buf[0, 0] = x0
        buf[0, 1] = x1
        return 1
    # a line a . x = b
    g, u, v = _extgcd(ea0[0], ea1[0])
    if g < 0:
        g, u, v = -g, -u, -v
    if eb[0] % g != 0:
        return 0
    p0 = u * (eb[0] // g)
    p1 = v * (eb[0] // g)
    d0 = -ea1[0] // g
    d1 = ea0[0] // g
    dd = d0 * d0 + d1 * d1
    pd = p0 * d0 + p1 * d1
    pp = p0 * p0 + p1 * p1
    disc = pd * pd - dd * (pp - rem)
    if disc < 0:
        return 0
    sq = np.sqrt(np.float64(disc))
    tlo = int(np.floor((-pd - sq) / dd)) - 1
    thi = int(np.ceil((-pd + sq) / dd)) + 1
    for t in range(tlo, thi + 1):
        x0 = p0 + t * d0
        x1 = p1 + t * d1
        if x0 * x0 + x1 * x1 > rem or (x0 == 0 and x1 == 0):
            continue
        if abs(x0) > mbox or abs(x1) > mbox:
            continue
        ok = True
        for e in range(1, ne):
            if ea0[e] * x0 + ea1[e] * x1 != eb[e]:
                ok = False
                break
        if ok:
            buf[cnt, 0] = x0
            buf[cnt, 1] = x1
            cnt += 1
    return cnt


@numba.njit(cache=True)
def _propagate_d2(alpha, pts, norms, R2, mbox, inv_scale2, out, want):
    """Depth-first enumeration of z with omega_j(z) = 0, sum |z_i|^2 <= R2.

    Returns (count, gaussian weight sum).  The first ``want`` solutions are
    copied into ``out`` (shape (want, N, 2)).
    """
    N = alpha.shape[0]
    lv = _levels(alpha)
    K = pts.shape[0]
    bufs = np.empty((N, K + 8, 2), np.int64)
    ncand = np.zeros(N, np.int64)
    pos = np.zeros(N, np.int64)
    used = np.zeros(N + 1, np.int64)
    z = np.zeros((N, 2), np.int64)
    ea0 = np.empty(N, np.int64)
    ea1 = np.empty(N, np.int64)
    eb = np.empty(N, np.int64)
    count = 0
    wsum = 0.0
    k = 0
    ncand[0] = _candidates(0, z, alpha, lv, pts, norms, R2, mbox, bufs[0], ea0, ea1, eb)
    pos[0] = 0
    while k >= 0:
        if pos[k] >= ncand[k]:
            k -= 1
            if k >= 0:
                pos[k] += 1
            continue
        z[k, 0] = bufs[k, pos[k], 0]
        z[k, 1] = bufs[k, pos[k], 1]
        used[k + 1] = used[k] + z[k, 0] * z[k, 0] + z[k, 1] * z[k, 1]
        if k == N - 1:
            ok = True
            for j in range(N):
                s0 = 0
                s1 = 0
                for i in range(N):
                    s0 += alpha[j, i] * z[i, 0]
                    s1 += alpha[j, i] * z[i, 1]
                if s0 == 0 and s1 == 0:
                    ok = False
                    break
            if ok:
                if count < want:
                    for i in range(N):
                        out[count, i, 0] = z[i, 0]
                        out[count, i, 1] = z[i, 1]
                count += 1
                wsum += np.exp(-used[N] * inv_scale2)
            pos[k] += 1
            continue
        k += 1
        ncand[k] = _candidates(k, z, alpha, lv, pts, norms, R2 - used[k], mbox, bufs[k],
                               ea0, ea1, eb)
        pos[k] = 0
    return count, wsum


def _ball_points(radius):
    r = int(math.floor(radius))
    a = np.arange(-r, r + 1)
    g = np.stack(np.meshgrid(a, a, indexing="ij"), axis=-1).reshape(-1, 2)
    n = (g * g).sum(axis=1)
    keep = n <= radius * radius + 1e-9
    g, n = g[keep], n[keep]
    order = np.lexsort((g[:, 1], g[:, 0], n))
    return np.ascontiguousarray(g[order]).astype(np.int64), n[order].astype(np.int64)


def _sumN_brute(phi, alpha, L, mbox, R2):
    N, d = alpha.N, phi.d
    ncells = (2 * mbox + 1) ** (N * d)
    if ncells > 5e7:
        raise ValueError("box too large for brute-force enumeration")
    a = np.arange(-mbox, mbox + 1)
    single = np.stack(np.meshgrid(*([a] * d), indexing="ij"), axis=-1).reshape(-1, d)
    single = single[(single * single).sum(axis=1) <= R2]
    parts = []
    # outer loop over z_1 keeps memory bounded
    rest = np.stack(np.meshgrid(*([np.arange(len(single))] * (N - 1)), indexing="ij"), axis=-1)
    rest = rest.reshape(-1, N - 1)
    for z1 in single:
        Z = np.concatenate([np.broadcast_to(z1, (len(rest), 1, d)), single[rest]], axis=1)
        nrm = np.einsum("kid,kid->k", Z, Z)
        Z = Z[nrm <= R2]
        if Z.size == 0:
            continue
        om = alpha.omega(Z)
        az = alpha.apply(Z)
        ok = np.all(om == 0, axis=1)
        ok &= np.all(np.any(Z != 0, axis=2), axis=1)
        ok &= np.all(np.any(az != 0, axis=2), axis=1)
        if np.any(ok):
            parts.append(float(np.sum(phi(Z[ok] / L))))
    return math.fsum(parts)


def resonance_sum_N(phi, alpha, L, box=6.0, d2_lognorm=True, method="auto",
                    return_count=False):
    """S_{L,N} = L^{N(1-d)} sum over admissible z with omega_j(z) = 0 for all j.

    Admissible means z_j != 0 and (alpha z)_j != 0 for every j.  The sum is
    truncated to |z|_inf <= box and to sum |z_i|^2 <= phi.radius^2.

    For d = 2 the default 'propagate' route assigns z_1, z_2, ... in turn;
    each form whose variables are all fixed except the newest one is a
    linear equation for it, so every level is either a disc, a lattice
    line or a single point.
    """
    if not isinstance(alpha, IncidenceMatrix):
        alpha = IncidenceMatrix(alpha)
    if not alpha.no_zero_rows:
        raise ValueError("alpha has a zero row: empty admissible set Z")
    if phi.N != alpha.N:
        raise ValueError("weight and incidence matrix disagree on N")
    if L < 2:
        raise ValueError("L must be >= 2")
    N, d = alpha.N, phi.d
    mbox = int(math.floor(box * L))
    R2 = (phi.radius * L) ** 2
    if method == "auto":
        method = "propagate" if d == 2 else "brute"
    if method == "propagate":
        if d != 2:
            raise ValueError("propagation route is implemented for d = 2")
        R2i = int(math.floor(R2))
        pts, norms = _ball_points(min(math.sqrt(R2i), mbox * math.sqrt(2)))
        if phi.gaussian_scale is not None:
            # weights accumulate inside the enumeration, nothing is stored
            inv = 1.0 / (phi.gaussian_scale * L) ** 2
            cnt, total = _propagate_d2(alpha.alpha, pts, norms, R2i, mbox, inv,
                                       np.zeros((0, N, 2), np.int64), 0)
        else:
            cnt, _ = _propagate_d2(alpha.alpha, pts, norms, R2i, mbox, 0.0,
                                   np.zeros((0, N, 2), np.int64), 0)
            out = np.zeros((cnt, N, 2), np.int64)
            _propagate_d2(alpha.alpha, pts, norms, R2i, mbox, 0.0, out, cnt)
            step = 1 << 18
            total = math.fsum(float(np.sum(phi(out[i:i + step] / L))) for i in range(0, cnt, step))
    elif method == "brute":
        cnt = None
        total = _sumN_brute(phi, alpha, L, mbox, R2)
    else:
        raise ValueError(f"unknown method {method!r}")
    val = total * L ** (N * (1 - d)) * _lognorm(L, d, N, d2_lognorm)
    return (val, cnt) if return_count else val


# ---------------------------------------------------------------------------
# auxiliary quadric systems and finite fields

def _poly_add(p, q, c=1):
    out = dict(p)
    for k, v in q.items():
        out[k] = out.get(k, 0) + c * v
        if out[k] == 0:
            del out[k]
    return out


def quadric_polynomials(alpha, z1, v):
    """Polynomials q_j (1 < j < N) in the (N-2)d coordinates of z_2..z_{N-1}.

    With alpha normalised so that alpha[0, N-1] = 1,
    q_j = z_j . (alpha_j1 z1 + alpha_jN v + sum_{1<i<N} (alpha_ji - alpha_jN alpha_1i) z_i).
    Each polynomial is a dict {exponent tuple: integer coefficient}.
    """
    if not isinstance(alpha, IncidenceMatrix):
        alpha = IncidenceMatrix(alpha)
    a = alpha.alpha
    N = alpha.N
    if a[0, N - 1] != 1:
        raise ValueError("alpha must be normalised with alpha[0, N-1] = 1")
    z1 = np.asarray(z1, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    d = z1.size
    m = (N - 2) * d

    def var(i, k):  # coordinate k of z_i, 1 < i < N (zero-based i in 1..N-2)
        e = [0] * m
        e[(i - 1) * d + k] += 1
        return e

    polys = []
    for j in range(1, N - 1):
        q = {}
        for k in range(d):
            lin = a[j, 0] * z1[k] + a[j, N - 1] * v[k]
            ej = var(j, k)
            if lin:
                q = _poly_add(q, {tuple(ej): int(lin)})
            for i in range(1, N - 1):
                beta = a[j, i] - a[j, N - 1] * a[0, i]
                if beta:
                    e = list(ej)
                    e[(i - 1) * d + k] += 1
                    q = _poly_add(q, {tuple(e): int(beta)})
        polys.append(q)
    return polys


def _eval_polys(polys, X, mod=None):
    X = np.asarray(X, dtype=np.int64)
    vals = []
    for q in polys:
        acc = np.zeros(X.shape[0], dtype=np.int64)
        for e, c in q.items():
            term = np.full(X.shape[0], c, dtype=np.int64)
            for var, k in enumerate(e):
                if k:
                    term = term * X[:, var] ** k
                    if mod is not None:
                        term %= mod
            acc = acc + term
            if mod is not None:
                acc %= mod
        vals.append(acc)
    return np.stack(vals, axis=1) if vals else np.zeros((X.shape[0], 0), dtype=np.int64)


def intersection_bound(N, d, R, L):
    """2^{(N-2)d} (N R L)^{(N-2)(d-1)}, with N R L floored at 1."""
    return 2 ** ((N - 2) * d) * max(N * R * L, 1.0) ** ((N - 2) * (d - 1))


def quadric_intersection_count(alpha, z1, v, R, L):
    """Integer points of {q_j = 0 for 1 < j < N} with |x|_inf <= R L.

    Returns (count, bound, count / bound).
    """
    if not isinstance(alpha, IncidenceMatrix):
        alpha = IncidenceMatrix(alpha)
    N = alpha.N
    if N not in (3, 4):
        raise ValueError("N must be 3 or 4")
    if not alpha.irreducible:
        raise ValueError("alpha must be irreducible")
    z1 = np.asarray(z1, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    if int(z1 @ v) != 0:
        raise ValueError("(z1, v) must satisfy z1 . v = 0")
    if not z1.any() or not v.any():
        raise ValueError("z1 and v must be nonzero")
    d = z1.size
    polys = quadric_polynomials(alpha, z1, v)
    M = int(math.floor(R * L + 1e-9))
    m = (N - 2) * d
    a = np.arange(-M, M + 1)
    count = 0
    # chunk over the first coordinate to bound memory
    rest = np.stack(np.meshgrid(*([a] * (m - 1)), indexing="ij"), axis=-1).reshape(-1, m - 1)
    for x0 in a:
        X = np.concatenate([np.full((len(rest), 1), x0), rest], axis=1)
        vals = _eval_polys(polys, X)
        count += int(np.count_nonzero(np.all(vals == 0, axis=1)))
    bound = intersection_bound(N, d, R, L)
    return count, bound, count / bound


def is_prime(p):
    p = int(p)
    if p < 2:
        return False
    return all(p % k for k in range(2, math.isqrt(p) + 1))


def finite_field_count(polys, p, m, r=None):
    """Common zeros of ``polys`` over F_p^m and the bound p^r prod deg.

    ``r`` is the declared dimension of the zero set; by default m minus
    the number of polynomials.
    """
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    if p**m > 1e9:
        raise ValueError("field too large for brute force")
    polys = [q for q in polys]
    if r is None:
        r = m - len(polys)
    degs = [max((sum(e) for e in q), default=0) for q in polys]
    count = 0
    a = np.arange(p)
    if m == 0:
        return 1, 1
    rest = np.stack(np.meshgrid(*([a] * (m - 1)), indexing="ij"), axis=-1).reshape(-1, m - 1) \
        if m > 1 else np.zeros((1, 0), dtype=np.int64)
    for x0 in a:
        X = np.concatenate([np.full((len(rest), 1), x0), rest], axis=1)
        vals = _eval_polys(polys, X, mod=p)
        count += int(np.count_nonzero(np.all(vals % p == 0, axis=1)))
    bound = p**r * math.prod(max(dg, 1) for dg in degs)
    return count, bound
