"""Memory kernels of the kinetic operator.

For a quadruple of rates (g1, g2, g3, g4), with g4 the rate of the base
frequency and G = g1 + g2 + g3 + g4, the kernel

    Z^j(t0) = int_0^t0 exp(-g_j (t0 - l)) prod_{m != j} sinh(g_m l) / sinh(g_m t0) dl

weights the j-th cubic term.  Expanding the product of sinh ratios turns
Z^j into a signed sum of 8 elementary integrals

    phi(a, G, t) = int_0^t exp(-G (t - l) - a l) dl = (e^{-a t} - e^{-G t}) / (G - a)

with a running over 2 * (partial sums of the three rates m != j).  Some of
these have vanishing denominators (e.g. rates (1, 1, 1, 3), j = 4), which
is why phi is evaluated through a guarded routine.

Indices follow the convention j = 1, 2, 3 for the three partner modes
and j = 4 for the base mode.  Every public function broadcasts over
leading axes of ``quad`` (shape (..., 4)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numba
import numpy as np
from scipy import integrate

__all__ = [
    "GammaQuad",
    "KernelBundle",
    "phi_expdiff",
    "Z_closed",
    "Z_all",
    "Z_quadrature",
    "Z_infinity",
    "T_factor",
    "Tcal_factor",
    "Tcal_closed",
    "kernel_bundle",
]

# relative threshold for a vanishing denominator G - a
TOL_DEN = 1e-9
# below this value of prod(1 - exp(-2 g_m t0)) the signed sum cancels badly
_SMALL_PROD = 1e-4
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


@dataclass(frozen=True)
class GammaQuad:
    """Four dissipation rates, the last one belonging to the base frequency."""

    g1: float
    g2: float
    g3: float
    g4: float

    def __post_init__(self):
        if min(self.g1, self.g2, self.g3, self.g4) < 1:
            raise ValueError("dissipation rates must be >= 1")

    @property
    def total(self):
        return self.g1 + self.g2 + self.g3 + self.g4

    def as_array(self):
        return np.array([self.g1, self.g2, self.g3, self.g4])


@dataclass(frozen=True)
class KernelBundle:
    tau0: float
    quad: GammaQuad
    Z: tuple
    Z_inf: float
    T: float
    Tcal: tuple


def _as_quad(quad):
    if isinstance(quad, GammaQuad):
        return quad.as_array()
    q = np.asarray(quad, dtype=float)
    if q.shape[-1] != 4:
        raise ValueError("last axis of quad must have length 4")
    return q


def phi_expdiff(a, b, t):
    """(exp(-a t) - exp(-b t)) / (b - a), with its limit t exp(-b t) at a = b.

    The denominator is treated as zero when |b - a| < TOL_DEN * b, and a
    second order Taylor expansion in x = (b - a) t is used up to
    1e3 * TOL_DEN * b.  Elsewhere exp(-b t) expm1(x) / x keeps full
    relative accuracy for |x| <= 1, and the plain difference is used
    beyond.
    """
    a, b, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, t)))
    den = b - a
    x = den * t
    tol = TOL_DEN * np.abs(b)
    ebt = np.exp(-b * t)
    out = np.empty(np.broadcast(a, b, t).shape)
    degenerate = np.abs(den) < tol
    taylor = ~degenerate & (np.abs(den) < 1e3 * tol)
    small = ~degenerate & ~taylor & (np.abs(x) <= 1.0)
    big = ~(degenerate | taylor | small)
    out[degenerate] = (t * ebt)[degenerate]
    xt = x[taylor]
    out[taylor] = (t * ebt)[taylor] * (1 + xt / 2 + xt * xt / 6)
    xs = x[small]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(xs == 0, 1.0, np.expm1(xs) / np.where(xs == 0, 1.0, xs))
    out[small] = (t * ebt)[small] * ratio
    out[big] = (np.exp(-a[big] * t[big]) - ebt[big]) / den[big]
    return out if out.ndim else float(out)


def _others(j):
    if j not in (1, 2, 3, 4):
        raise ValueError("kernel index j must be 1, 2, 3 or 4")
    return [m for m in range(4) if m != j - 1]


def Tcal_closed(tau0, quad, j):
    """int_0^t0 exp(-G (t0 - l)) prod_{m != j} (1 - exp(-2 g_m l)) dl by expansion."""
    q = _as_quad(quad)
    G = q.sum(axis=-1)
    oth = _others(j)
    acc = np.zeros(np.broadcast(G, np.asarray(tau0)).shape)
    for k in range(4):
        for S in combinations(oth, k):
            a = 2.0 * sum((q[..., m] for m in S), np.zeros_like(G))
            acc = acc + (-1) ** k * phi_expdiff(a, G, tau0)
    return acc


def _ratio_integrand(l, tau0, q, oth, G):
    # exp(-G(t0-l)) prod (1-e^{-2 g l}) / (1-e^{-2 g t0}); l has a trailing node axis
    val = np.exp(-G[..., None] * (tau0[..., None] - l))
    for m in oth:
        g = q[..., m, None]
        val = val * np.expm1(-2 * g * l) / np.expm1(-2 * g * tau0[..., None])
    return val


def _Z_gauss(tau0, q, j):
    """Composite Gauss-Legendre for Z^j, used when the closed form cancels."""
    oth = _others(j)
    G = q.sum(axis=-1)
    tau0 = np.broadcast_to(np.asarray(tau0, dtype=float), G.shape)
    width = np.minimum(tau0, 40.0 / G)
    cut = tau0 - width
    total = np.zeros(G.shape)
    # boundary layer of width 40/G near l = t0, then the remainder
    for lo, hi in ((cut, tau0), (np.zeros_like(cut), cut)):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        nodes = mid[..., None] + half[..., None] * _GL_X
        vals = _ratio_integrand(nodes, tau0, q, oth, G)
        total = total + half * (vals @ _GL_W)
    return total


def Z_closed(tau0, quad, j):
    """Closed-form kernel Z^j(t0), zero at t0 = 0.

    Parameters
    ----------
    tau0 : float or ndarray
        Memory time, >= 0 (``np.inf`` gives 1/G).
    quad : array_like, shape (..., 4)
        Rates (g1, g2, g3, g4).
    j : int
        Kernel index in 1..4.
    """
    q = _as_quad(quad)
    G = q.sum(axis=-1)
    t = np.asarray(tau0, dtype=float)
    if np.any(t < 0):
        raise ValueError("tau0 must be nonnegative")
    t, G = np.broadcast_arrays(t, G)
    qb = np.broadcast_to(q, G.shape + (4,))
    out = np.empty(G.shape)
    inf = np.isinf(t)
    out[inf] = 1.0 / G[inf]
    zero = t == 0
    out[zero] = 0.0
    rest = ~(inf | zero)
    if np.any(rest):
        tr, qr = t[rest], qb[rest]
        oth = _others(j)
        prod = np.ones_like(tr)
        for m in oth:
            prod = prod * -np.expm1(-2 * qr[:, m] * tr)
        val = Tcal_closed(tr, qr, j) / np.where(prod > 0, prod, 1.0)
        bad = prod < _SMALL_PROD
        if np.any(bad):
            val[bad] = _Z_gauss(tr[bad], qr[bad], j)
        out[rest] = val
    return out if out.ndim else float(out)


@numba.njit(cache=True)
def _phi_nb(a, b, t):
    den = b - a
    x = den * t
    tol = TOL_DEN * abs(b)
    ebt = math.exp(-b * t)
    if abs(den) < tol:
        return t * ebt
    if abs(den) < 1e3 * tol:
        return t * ebt * (1 + x / 2 + x * x / 6)
    if abs(x) <= 1.0:
        return t * ebt * (math.expm1(x) / x if x != 0 else 1.0)
    return (math.exp(-a * t) - ebt) / den


@numba.njit(cache=True)
def _Z_all_nb(tau0, q, out, glx, glw, small):
    """Compiled Z^1..Z^4 for rows of q at one finite tau0 > 0 (same branches as Z_closed)."""
    oth = np.empty(3, np.int64)
    E = np.empty(4)
    D = np.empty(4)
    for n in range(q.shape[0]):
        G = q[n, 0] + q[n, 1] + q[n, 2] + q[n, 3]
        eG = math.exp(-G * tau0)
        tol = TOL_DEN * G
        for m in range(4):
            E[m] = math.exp(-2 * q[n, m] * tau0)
            D[m] = -math.expm1(-2 * q[n, m] * tau0)
        for j in range(4):
            k = 0
            for m in range(4):
                if m != j:
                    oth[k] = m
                    k += 1
            prod = D[oth[0]] * D[oth[1]] * D[oth[2]]
            if prod >= small:
                acc = 0.0
                for mask in range(8):
                    a = 0.0
                    ea = 1.0
                    sign = 1.0
                    for k in range(3):
                        if mask & (1 << k):
                            a += 2 * q[n, oth[k]]
                            ea *= E[oth[k]]
                            sign = -sign
                    den = G - a
                    if abs(den) < 1e3 * tol or abs(den * tau0) <= 1.0:
                        acc += sign * _phi_nb(a, G, tau0)
                    else:
                        acc += sign * (ea - eG) / den
                out[n, j] = acc / prod
            else:
                width = min(tau0, 40.0 / G)
                cut = tau0 - width
                tot = 0.0
                for panel in range(2):
                    lo = cut if panel == 0 else 0.0
                    hi = tau0 if panel == 0 else cut
                    half = 0.5 * (hi - lo)
                    mid = 0.5 * (hi + lo)
                    for i in range(glx.size):
                        l = mid + half * glx[i]
                        v = math.exp(-G * (tau0 - l))
                        for k in range(3):
                            g = q[n, oth[k]]
                            v *= math.expm1(-2 * g * l) / math.expm1(-2 * g * tau0)
                        tot += half * glw[i] * v
                out[n, j] = tot


def Z_all(tau0, quad):
    """Stack of Z^1..Z^4 along a new last axis.

    A compiled loop is used for a scalar tau0; it follows the same
    branches as :func:`Z_closed`.
    """
    q = _as_quad(quad)
    t = np.asarray(tau0, dtype=float)
    if t.ndim == 0 and np.isfinite(t) and t > 0:
        flat = np.ascontiguousarray(q.reshape(-1, 4))
        out = np.empty((flat.shape[0], 4))
        _Z_all_nb(float(t), flat, out, _GL_X, _GL_W, _SMALL_PROD)
        return out.reshape(q.shape[:-1] + (4,))
    return np.stack([np.asarray(Z_closed(tau0, quad, j)) for j in (1, 2, 3, 4)], axis=-1)


def Z_infinity(quad):
    """Long-memory limit 1/G of every kernel."""
    q = _as_quad(quad)
    out = 1.0 / q.sum(axis=-1)
    return out if np.ndim(out) else float(out)


def Z_quadrature(tau0, quad, j, epsabs=1e-13):
    """Adaptive quadrature of the sinh-ratio integral (scalar inputs).

    The ratios are formed in log space,
    log sinh(g l)/sinh(g t0) = -g (t0 - l) + log1p(-e^{-2gl}) - log1p(-e^{-2gt0}),
    so large g t0 never overflows.
    """
    q = _as_quad(quad)
    if q.ndim != 1:
        raise ValueError("Z_quadrature takes a single quadruple")
    tau0 = float(tau0)
    if tau0 < 0:
        raise ValueError("tau0 must be nonnegative")
    if tau0 == 0:
        return 0.0
    oth = _others(j)
    gj = q[j - 1]
    den = sum(np.log(-np.expm1(-2 * q[m] * tau0)) for m in oth)

    def f(l):
        if l <= 0:
            return 0.0
        s = -gj * (tau0 - l) - den
        for m in oth:
            s += -q[m] * (tau0 - l) + np.log(-np.expm1(-2 * q[m] * l))
        return np.exp(s)

    G = q.sum()
    cut = tau0 - min(tau0, 40.0 / G)
    val, _ = integrate.quad(f, cut, tau0, epsabs=epsabs, epsrel=1e-12, limit=200)
    if cut > 0:
        v2, _ = integrate.quad(f, 0.0, cut, epsabs=epsabs, epsrel=1e-12, limit=200)
        val += v2
    return val


def T_factor(tau, quad):
    """T = int_0^tau exp(-2 g4 (tau - l) - G l) dl, equal to tau exp(-2 g4 tau) when 2 g4 = G."""
    q = _as_quad(quad)
    if np.any(np.asarray(tau) < 0):
        raise ValueError("tau must be nonnegative")
    return phi_expdiff(q[..., 3] * 2.0, q.sum(axis=-1), tau)


def Tcal_factor(tau0, quad, j, epsabs=1e-14):
    """int_0^t0 exp(-G t0) e^{g_j l} prod_{k != j} (e^{g_k l} - e^{-g_k l}) dl by quadrature.

    Evaluated in the stable form exp(-G (t0 - l)) prod (1 - e^{-2 g_k l});
    the value lies in [0, 1/G].
    """
    q = _as_quad(quad)
    if q.ndim != 1:
        raise ValueError("Tcal_factor takes a single quadruple")
    tau0 = float(tau0)
    if tau0 < 0:
        raise ValueError("tau0 must be nonnegative")
    if tau0 == 0:
        return 0.0
    oth = _others(j)
    G = q.sum()

    def f(l):
        v = np.exp(-G * (tau0 - l))
        for m in oth:
            v *= -np.expm1(-2 * q[m] * l)
        return v

    cut = tau0 - min(tau0, 40.0 / G)
    val, _ = integrate.quad(f, cut, tau0, epsabs=epsabs, epsrel=1e-12, limit=200)
    if cut > 0:
        v2, _ = integrate.quad(f, 0.0, cut, epsabs=epsabs, epsrel=1e-12, limit=200)
        val += v2
    return val


def kernel_bundle(tau0, quad, tau=None):
    """All kernel data for one quadruple; ``tau`` defaults to ``tau0``."""
    gq = quad if isinstance(quad, GammaQuad) else GammaQuad(*map(float, quad))
    q = gq.as_array()
    tau = tau0 if tau is None else tau
    return KernelBundle(
        tau0=float(tau0),
        quad=gq,
        Z=tuple(float(Z_closed(tau0, q, j)) for j in (1, 2, 3, 4)),
        Z_inf=Z_infinity(q),
        T=float(T_factor(tau, q)),
        Tcal=tuple(Tcal_factor(tau0, q, j) for j in (1, 2, 3, 4)),
    )
