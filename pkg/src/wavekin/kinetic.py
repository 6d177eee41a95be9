"""Cubic wave kinetic operators on radial spectral fields.

For a base point s and (s1, s2) on the quadric Sigma_s, put s3 = s1 + s2 - s
and s4 = s.  The operator with memory time tau0 is

    K_s(tau0)(v) = 4 C int_{Sigma_s} ( Z^4 v1 v2 v3 + Z^3 v1 v2 v4
                                       - Z^2 v1 v3 v4 - Z^1 v2 v3 v4 ) dmu

with Z^j = Z^j(tau0; gamma_1, gamma_2, gamma_3, gamma_s).  The four summands
(signs included) are returned separately as K^1..K^4.  Since dissipation
and forcing are radial, every field here is radial, and the integrand
only depends on |s1|^2, |s2|^2 and |s3|^2 = |s1|^2 + |s2|^2 - |s|^2.

:func:`X_lattice` is the finite-box counterpart: the same bracket summed
over resonant lattice triples.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import PchipInterpolator

from .kernels import Z_all
from .lattice import orthogonal_basis, pair_norm_histogram, _lattice_points
from .model import ModelParams, gamma_of_sq
from .quadrature import C_d, radial_quadric_rule, singular_series_constant

__all__ = [
    "RadialField",
    "KineticOperator",
    "KAPPA",
    "kinetic_constant",
    "default_base_radii",
    "apply_K",
    "apply_K_terms",
    "apply_K_inf",
    "apply_K_tau",
    "n0_field",
    "X_lattice",
]

# kappa_j K^j maps nonnegative fields to nonnegative values, j = 1..4
KAPPA = np.array([-1.0, -1.0, 1.0, 1.0])


class RadialField:
    """Radial function given by values on radii 0 = r_0 < ... < r_n.

    Monotone cubic (PCHIP) interpolation in |s|, zero beyond r_n.
    """

    def __init__(self, knots, values):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if knots.ndim != 1 or knots.size < 2:
            raise ValueError("a radial field needs at least two knots")
        if knots[0] != 0 or np.any(np.diff(knots) <= 0):
            raise ValueError("knots must start at 0 and increase strictly")
        if values.shape != knots.shape:
            raise ValueError("values and knots differ in shape")
        if not np.all(np.isfinite(values)):
            raise ValueError("field has non-finite values")
        self.knots = knots
        self.values = values
        self._interp = PchipInterpolator(knots, values, extrapolate=False)

    @classmethod
    def from_function(cls, f, knots):
        knots = np.asarray(knots, dtype=float)
        return cls(knots, f(knots))

    @property
    def support(self):
        return float(self.knots[-1])

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = self._interp(r)
        out = np.where(r <= self.knots[-1], out, 0.0)
        return out if out.ndim else float(out)

    def of_sq(self, y):
        return self(np.sqrt(np.maximum(np.asarray(y, dtype=float), 0.0)))

    def at(self, s):
        s = np.asarray(s, dtype=float)
        return self(np.linalg.norm(s, axis=-1))

    def scaled(self, lam):
        return RadialField(self.knots, lam * self.values)

    def with_values(self, values):
        return RadialField(self.knots, values)


def default_base_radii(sigma, n=24, extent=8.0):
    """0 followed by n - 1 log-spaced radii up to extent * sigma."""
    top = extent * sigma
    return np.concatenate([[0.0], np.geomspace(top / 200.0, top, n - 1)])


def kinetic_constant(d, constant=None):
    if d == 2:
        raise ValueError("closed form unavailable for d=2: the continuum operator needs C_2")
    if constant in (None, "formula"):
        return C_d(d)
    if constant == "singular_series":
        return singular_series_constant(d)
    return float(constant)


def _bracket_terms(Z, v1, v2, v3, v4):
    """Signed summands (K^1, K^2, K^3, K^4) of the integrand, last axis 4."""
    return np.stack(
        [-Z[..., 0] * v2 * v3 * v4,
         -Z[..., 1] * v1 * v3 * v4,
         Z[..., 2] * v1 * v2 * v4,
         Z[..., 3] * v1 * v2 * v3],
        axis=-1,
    )


class KineticOperator:
    """K(tau0) on radial fields with a fixed support, at fixed base radii.

    The quadrature geometry only depends on the base radii, the support
    radius and the dissipation profile, so it is built once.  Kernel
    values are cached per tau0.

    Parameters
    ----------
    d : int
    r_star : float
        Dissipation exponent.
    support : float
        Fields vanish beyond this radius.
    base_radii : array_like
        Radii |s| at which K is returned.
    orders : (n_r, n_c, n_u)
        Quadrature orders of :func:`wavekin.quadrature.radial_quadric_rule`.
    constant : None, 'singular_series' or float
        Lattice-to-continuum constant; None uses C_d.
    """

    def __init__(self, d, r_star, support, base_radii, orders=(16, 12, 16), panels=4,
                 constant=None, cache_size=4096):
        self.d = int(d)
        self.r_star = float(r_star)
        self.C = kinetic_constant(self.d, constant)
        self.support = float(support)
        self.base_radii = np.atleast_1d(np.asarray(base_radii, dtype=float))
        self.orders = tuple(orders)
        self._nodes = []
        for q in self.base_radii:
            x, y, w = radial_quadric_rule(q, self.d, self.support**2 + q * q, *self.orders, panels=panels)
            z3 = np.maximum(x + y - q * q, 0.0)
            quad = np.stack([gamma_of_sq(x, self.r_star), gamma_of_sq(y, self.r_star),
                             gamma_of_sq(z3, self.r_star),
                             np.full_like(x, float(gamma_of_sq(q * q, self.r_star)))], axis=-1)
            self._nodes.append((x, y, z3, w, quad))
        self._cache = {}
        self._cache_size = cache_size

    def kernels(self, tau0):
        key = float(tau0)
        Z = self._cache.get(key)
        if Z is None:
            Z = [Z_all(key, node[4]) for node in self._nodes]
            if len(self._cache) >= self._cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = Z
        return Z

    def terms(self, tau0, v, truncate=False):
        """Array (n_base, 4) of K^1..K^4 at every base radius.

        With ``truncate`` a field reaching beyond the operator support is
        accepted and the integral is cut at the support.
        """
        if not isinstance(v, RadialField):
            raise TypeError("v must be a RadialField")
        if not truncate and v.support > self.support * (1 + 1e-12):
            raise ValueError("field support exceeds the operator support")
        Zs = self.kernels(tau0)
        out = np.empty((self.base_radii.size, 4))
        for i, (q, (x, y, z3, w, _)) in enumerate(zip(self.base_radii, self._nodes)):
            v1, v2, v3 = v.of_sq(x), v.of_sq(y), v.of_sq(z3)
            v4 = v(q)
            out[i] = 4 * self.C * (w @ _bracket_terms(Zs[i], v1, v2, v3, v4))
        return out

    def __call__(self, tau0, v, truncate=False):
        return self.terms(tau0, v, truncate).sum(axis=1)


def _base_radius(s):
    s = np.asarray(s, dtype=float)
    return float(np.linalg.norm(s)) if s.ndim else abs(float(s))


def apply_K_terms(tau0, v, s, params: ModelParams, orders=(16, 12, 16), panels=4, constant=None):
    """K^1..K^4 of the field ``v`` at base point ``s`` (vector or radius)."""
    op = KineticOperator(params.d, params.r_star, v.support, [_base_radius(s)], orders, panels, constant)
    return op.terms(tau0, v)[0]


def apply_K(tau0, v, s, params: ModelParams, orders=(16, 12, 16), panels=4, constant=None):
    """K_s(tau0)(v); ``tau0 = np.inf`` gives the long-memory operator."""
    return float(apply_K_terms(tau0, v, s, params, orders, panels, constant).sum())


def apply_K_inf(v, s, params: ModelParams, **kw):
    """Long-memory operator: every kernel equals 1/(g1 + g2 + g3 + g4)."""
    return apply_K(np.inf, v, s, params, **kw)


def apply_K_tau(tau, tau0, v, s, params: ModelParams, **kw):
    """(1 - exp(-2 gamma_s tau)) / (2 gamma_s) K_s(tau0)(v), for 0 < tau <= 1."""
    if not (0 < tau <= 1):
        raise ValueError("tau must lie in (0, 1]")
    g = float(gamma_of_sq(_base_radius(s) ** 2, params.r_star))
    return -math.expm1(-2 * g * tau) / (2 * g) * apply_K(tau0, v, s, params, **kw)


def n0_field(tau0, params: ModelParams, knots):
    """Linear spectrum B_s (1 - exp(-2 gamma_s tau0)) as a RadialField."""
    knots = np.asarray(knots, dtype=float)
    y = knots**2
    g = gamma_of_sq(y, params.r_star)
    B = params.forcing.of_sq(y) ** 2 / g
    if np.isinf(tau0):
        return RadialField(knots, B)
    return RadialField(knots, -B * np.expm1(-2 * g * tau0))


def _n0_sq(y, tau0, params):
    g = gamma_of_sq(y, params.r_star)
    B = params.forcing.of_sq(y) ** 2 / g
    return B if np.isinf(tau0) else -B * np.expm1(-2 * g * tau0)


def _lattice_bracket(x, y, q2, tau0, params, chunk=1 << 18):
    """Bracket of the lattice sum at squared norms x = |s1|^2, y = |s2|^2 (arrays)."""
    out = np.empty(x.size)
    n4 = float(_n0_sq(q2, tau0, params))
    g4 = float(gamma_of_sq(q2, params.r_star))
    for i in range(0, x.size, chunk):
        xs, ys = x[i:i + chunk], y[i:i + chunk]
        zs = np.maximum(xs + ys - q2, 0.0)
        quad = np.stack([gamma_of_sq(xs, params.r_star), gamma_of_sq(ys, params.r_star),
                         gamma_of_sq(zs, params.r_star), np.full_like(xs, g4)], axis=-1)
        Z = Z_all(tau0, quad)
        n1, n2, n3 = (_n0_sq(t, tau0, params) for t in (xs, ys, zs))
        out[i:i + chunk] = _bracket_terms(Z, n1, n2, n3, n4).sum(axis=-1)
    return out


def X_lattice(s, tau0, tau, L, params: ModelParams, tail=1e-12):
    """Lattice sum 4 L^{2(1-d)} tau sum delta' delta(omega) (bracket with n^(0)(tau0)).

    The sum runs over s1, s2 in L^{-1} Z^d with s3 = s1 + s2 - s,
    (s1 - s) . (s2 - s) = 0 and s1, s2 != s.  ``s`` must lie on the
    lattice.  Terms are truncated where the Gaussian forcing makes every
    summand smaller than ``tail`` relative to its peak.
    """
    if L < 2:
        raise ValueError("L must be >= 2")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    d = params.d
    if s.size == 1 and d > 1:
        s = np.concatenate([s, np.zeros(d - 1)])
    if s.size != d:
        raise ValueError("s has the wrong dimension")
    ms = s * L
    if not np.allclose(ms, np.round(ms), atol=1e-9):
        raise ValueError("s must lie on the lattice L^{-1} Z^d")
    ms = np.round(ms).astype(np.int64)
    if tau == 0 or tau0 == 0:
        return 0.0
    sigma = params.sigma
    q2 = float(s @ s)
    # every summand carries two Gaussian factors whose squared arguments sum to >= |s1|^2 + |s2|^2 - |s|^2
    Rn2 = sigma**2 * math.log(1.0 / tail) if math.isfinite(sigma) else np.inf
    if not math.isfinite(Rn2):
        raise ValueError("X_lattice needs a decaying forcing profile")
    pref = 4 * L ** (2 * (1 - d)) * tau
    if not np.any(ms) and d in (2, 3):
        P = int(math.floor(L * math.sqrt(Rn2)))
        n1, n2, w = pair_norm_histogram(d, P)
        vals = _lattice_bracket(n1 / L**2, n2 / L**2, 0.0, tau0, params)
        return pref * float(np.sum(w * vals))
    # general base point: loop over z1, then the sublattice z1^perp
    lim2 = (Rn2 + q2) * L**2  # bound on |m_s + m1|^2 + |m_s + m2|^2
    Rz = math.sqrt(2 * lim2) + 2 * math.sqrt(q2) * L
    parts = []
    for m1 in _lattice_points(np.eye(d, dtype=np.int64), Rz):
        if not m1.any():
            continue
        B = orthogonal_basis(m1)
        m2 = _lattice_points(B, Rz)
        m2 = m2[np.any(m2 != 0, axis=1)]
        if m2.size == 0:
            continue
        s1 = ms + m1
        s2 = ms + m2
        x = np.full(len(m2), float(s1 @ s1))
        y = np.einsum("ij,ij->i", s2, s2).astype(float)
        keep = x + y <= lim2
        if np.any(keep):
            parts.append(float(np.sum(_lattice_bracket(x[keep] / L**2, y[keep] / L**2, q2, tau0, params))))
    return pref * math.fsum(parts)
