"""Integrals over the resonant quadric and the lattice-to-continuum constant.

The quadric through a base point s is

    Sigma_s = {(s1, s2) : (s1 - s) . (s2 - s) = 0}

with the measure mu = delta(z1 . z2) dz1 dz2 in shifted coordinates
z_i = s_i - s.  For fixed z1 != 0 the delta collapses onto the hyperplane
z1^perp with weight 1/|z1|, which is what both quadrature routes use.

* :func:`sigma_integral` handles a general integrand Phi(s1, s2).  z1 is
  written in spherical coordinates, z2 in polar coordinates on z1^perp.
* :func:`sigma_integral_radial` handles integrands that only depend on
  |s1|^2 and |s2|^2 (hence also on |s3|^2 = |s1|^2 + |s2|^2 - |s|^2).
  The angular integrations then reduce to one Jacobi variable.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, roots_jacobi, zeta

from .lattice import resonance_sum_2

__all__ = [
    "sphere_area",
    "C_d",
    "singular_series_constant",
    "SurfaceIntegralSpec",
    "sphere_rule",
    "sigma_integral",
    "sigma_integral_radial",
    "radial_quadric_rule",
    "probe_decay",
    "heath_brown_check",
    "write_table_csv",
]


def sphere_area(k):
    """Area of the unit sphere S^k in R^{k+1}."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.exp(gammaln((k + 1) / 2))


def C_d(d):
    """zeta(d-1) zeta(4d-2) / (zeta(d) zeta(2d-2)) for d >= 3."""
    if int(d) != d:
        raise ValueError("d must be an integer")
    d = int(d)
    if d == 2:
        raise ValueError("closed form unavailable for d=2")
    if d < 2:
        raise ValueError("d must be >= 3")
    return float(zeta(d - 1) * zeta(4 * d - 2) / (zeta(d) * zeta(2 * d - 2)))


def singular_series_constant(d):
    """zeta(d-1) / zeta(d): density of primitive directions times all multiples.

    For d >= 3 the number of pairs m1 . m2 = 0 weighted by a smooth
    function grows like this constant times the continuum integral, as
    the lattice sums of :mod:`wavekin.lattice` confirm numerically.
    """
    d = int(d)
    if d < 3:
        raise ValueError("d must be >= 3")
    return float(zeta(d - 1) / zeta(d))


def _constant(d, constant):
    if constant in (None, "formula"):
        return C_d(d)
    if constant == "singular_series":
        return singular_series_constant(d)
    return float(constant)


@dataclass(frozen=True)
class SurfaceIntegralSpec:
    """Orders of the product rule used by :func:`sigma_integral`.

    The radial variables |z1| and |z2| use composite Gauss-Legendre
    rules with ``n_panels`` panels of ``n_r`` nodes on [0, radius].
    """

    n_r: int = 12
    n_panels: int = 2
    n_polar: int = 8
    n_azimuth: int = 16

    def __post_init__(self):
        if min(self.n_r, self.n_panels, self.n_polar, self.n_azimuth) < 1:
            raise ValueError("quadrature orders must be positive")

    def refined(self):
        return SurfaceIntegralSpec(2 * self.n_r, self.n_panels, 2 * self.n_polar, 2 * self.n_azimuth)


def _composite_gl(a, b, n, panels, graded=False):
    """Gauss-Legendre with ``panels`` panels; graded panels halve towards a."""
    x, w = np.polynomial.legendre.leggauss(n)
    if graded and panels > 1:
        edges = a + (b - a) * np.concatenate([[0.0], 2.0 ** np.arange(1 - panels, 1)])
    else:
        edges = np.linspace(a, b, panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def sphere_rule(k, n_polar, n_azimuth):
    """Product rule on S^k in R^{k+1}; returns (points, weights).

    S^1 uses the trapezoid rule; S^k for k >= 2 peels off the first
    coordinate c with weight (1 - c^2)^{(k-2)/2} (Gauss-Jacobi).
    """
    if k == 0:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if k == 1:
        t = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
        return np.stack([np.cos(t), np.sin(t)], axis=1), np.full(n_azimuth, 2 * np.pi / n_azimuth)
    a = (k - 2) / 2
    c, wc = roots_jacobi(n_polar, a, a)
    sub, ws = sphere_rule(k - 1, n_polar, n_azimuth)
    sc = np.sqrt(1 - c * c)
    pts = np.concatenate(
        [np.broadcast_to(c[:, None, None], (c.size, sub.shape[0], 1)),
         sc[:, None, None] * sub[None]],
        axis=2,
    ).reshape(-1, k + 1)
    return pts, np.outer(wc, ws).ravel()


def _perp_frames(omega):
    """Orthonormal bases of omega^perp, shape (n, d-1, d)."""
    n, d = omega.shape
    # Householder reflection taking e_1 to omega
    e = np.zeros(d)
    e[0] = 1.0
    v = e[None] - omega
    nv = np.linalg.norm(v, axis=1)
    flip = nv < 1e-12
    v[flip] = 0.0
    v[~flip] /= nv[~flip, None]
    H = np.eye(d)[None] - 2 * v[:, :, None] * v[:, None, :]
    # H e_1 = omega; the other columns span omega^perp
    return np.transpose(H[:, :, 1:], (0, 2, 1))


def _eval_phi(phi, s, z1, z2):
    pts = np.stack([s + z1, s + z2], axis=-2)
    return np.asarray(phi(pts), dtype=float)


def probe_decay(phi, d, s=None):
    """Raise when Phi does not decay faster than |z|^{-(2d-1)} along random rays."""
    s = np.zeros(d) if s is None else np.asarray(s, dtype=float)
    rng = np.random.default_rng(12345)
    dirs = rng.normal(size=(8, 2, d))
    dirs /= np.linalg.norm(dirs.reshape(8, -1), axis=1)[:, None, None]
    t = 2.0 ** np.arange(-2, 13)
    z = t[:, None, None, None] * dirs[None]
    vals = np.abs(_eval_phi(phi, s, z[..., 0, :], z[..., 1, :]))
    if not np.all(np.isfinite(vals)):
        raise ValueError("integral may diverge: integrand is not finite")
    w = vals * (1 + t[:, None]) ** (2 * d)
    peak = w.max()
    if peak > 0 and w[-1].max() > 1e-8 * peak:
        raise ValueError("integral may diverge: integrand decays too slowly")


def sigma_integral(phi, s, radius=None, spec=SurfaceIntegralSpec(), probe=True):
    """Integral of Phi(s1, s2) over Sigma_s against mu.

    Parameters
    ----------
    phi : callable
        Maps arrays of shape (..., 2, d) holding (s1, s2) to values (...).
    s : array_like, shape (d,)
        Base point.
    radius : float, optional
        Phi is negligible once |z1| or |z2| exceeds it.  Defaults to
        ``phi.radius`` when present.
    spec : SurfaceIntegralSpec
        Quadrature orders.
    """
    s = np.asarray(s, dtype=float)
    d = s.size
    if d < 2:
        raise ValueError("d must be >= 2")
    if radius is None:
        radius = getattr(phi, "radius", None)
        if radius is None:
            raise ValueError("a truncation radius is required")
    if probe:
        probe_decay(phi, d, s)
    r, wr = _composite_gl(0.0, radius, spec.n_r, spec.n_panels)
    wr = wr * r ** (d - 2)  # dz1 / |z1| = r^{d-2} dr domega
    om, wom = sphere_rule(d - 1, spec.n_polar, spec.n_azimuth)
    rho, wrho = _composite_gl(0.0, radius, spec.n_r, spec.n_panels)
    wrho = wrho * rho ** (d - 2)
    psi, wpsi = sphere_rule(d - 2, spec.n_polar, spec.n_azimuth)
    frames = _perp_frames(om)  # (n_om, d-1, d)
    # directions in z1^perp for every omega: (n_om, n_psi, d)
    u = np.einsum("pk,okd->opd", psi, frames)
    parts = []
    for io in range(om.shape[0]):
        z1 = r[:, None, None] * om[io]  # (n_r, 1, d)
        z2 = (rho[:, None, None] * u[io][None]).reshape(1, -1, d)  # (1, n_rho n_psi, d)
        vals = _eval_phi(phi, s, np.broadcast_to(z1, (r.size, z2.shape[1], d)),
                         np.broadcast_to(z2, (r.size, z2.shape[1], d)))
        inner = vals.reshape(r.size, rho.size, psi.shape[0]) @ wpsi  # (n_r, n_rho)
        parts.append(wom[io] * float(wr @ inner @ wrho))
    return math.fsum(parts)


def radial_quadric_rule(q, d, X, n_r=24, n_c=12, n_u=24, panels=1, graded=True):
    """Nodes and weights for integrands G(|s1|^2, |s2|^2) over Sigma_s, q = |s|.

    Coordinates: r = |z1|, c = cos(z1, s), y = |s2|^2 = q^2 c^2 + u^2.
    Then |s1|^2 = q^2 + r^2 + 2 q r c and

        int G mu = |S^{d-2}|^2 int dc (1 - c^2)^{(d-3)/2}
                   int r^{d-2} dr int u^{d-2} du  G(|s1|^2, y).

    Integration is restricted to |s1|^2 <= X and y <= X.

    Returns
    -------
    x, y, w : ndarray
        Flattened node values of |s1|^2, |s2|^2 and the weights.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    a = (d - 3) / 2
    c, wc = roots_jacobi(n_c, a, a)
    A = sphere_area(d - 2) ** 2
    xr, wr = _composite_gl(0.0, 1.0, n_r, panels, graded)
    xu, wu = _composite_gl(0.0, 1.0, n_u, panels, graded)
    q2 = q * q
    rmax = np.maximum(-q * c + np.sqrt(np.maximum(X - q2 * (1 - c * c), 0.0)), 0.0)
    umax = np.sqrt(np.maximum(X - q2 * c * c, 0.0))
    r = rmax[:, None] * xr[None]  # (n_c, n_r)
    Wr = rmax[:, None] * wr[None] * r ** (d - 2)
    u = umax[:, None] * xu[None]  # (n_c, n_u)
    Wu = umax[:, None] * wu[None] * u ** (d - 2)
    x = q2 + r * r + 2 * q * r * c[:, None]
    y = q2 * (c * c)[:, None] + u * u
    shape = (c.size, xr.size, xu.size)
    X3 = np.broadcast_to(x[:, :, None], shape).ravel()
    Y3 = np.broadcast_to(y[:, None, :], shape).ravel()
    W3 = (A * wc[:, None, None] * Wr[:, :, None] * Wu[:, None, :]).ravel()
    return X3, Y3, W3


def sigma_integral_radial(G, q, d, X, n_r=24, n_c=12, n_u=24, panels=1):
    """Integral over Sigma_s of G(|s1|^2, |s2|^2); see :func:`radial_quadric_rule`."""
    x, y, w = radial_quadric_rule(q, d, X, n_r, n_c, n_u, panels)
    vals = np.broadcast_to(np.asarray(G(x, y), dtype=float), x.shape)
    return float(vals @ w)


def heath_brown_check(phi, d, L_list, constant=None, method="auto", spec=SurfaceIntegralSpec(),
                      integral=None):
    """Compare the normalised lattice sums S_{L,2} with their continuum limit.

    Returns a list of dicts with keys L, lattice_sum, limit, residual
    (relative) and wall_time_s.  For d >= 3 the limit is the constant
    times the quadric integral.  For d = 2 the sums are divided by ln L
    and the limit is an empirical constant: the last two values are
    extrapolated linearly in 1/ln L.
    """
    if integral is None:
        integral = sigma_integral(phi, np.zeros(d), spec=spec)
    rows = []
    for L in L_list:
        t0 = time.perf_counter()
        val = resonance_sum_2(phi, L, exclude_zeros=True, d2_lognorm=(d == 2), method=method)
        rows.append({"L": L, "lattice_sum": val, "wall_time_s": time.perf_counter() - t0})
    if d >= 3:
        limit = _constant(d, constant) * integral
    else:
        if len(rows) >= 2:
            (L1, v1), (L2, v2) = [(r["L"], r["lattice_sum"]) for r in rows[-2:]]
            x1, x2 = 1 / math.log(L1), 1 / math.log(L2)
            limit = v2 - (v2 - v1) / (x2 - x1) * x2
        else:
            limit = rows[-1]["lattice_sum"]
    for row in rows:
        row["limit"] = limit
        diff = abs(row["lattice_sum"] - limit)
        row["residual"] = diff / abs(limit) if limit != 0 else diff
    return rows


def write_table_csv(rows, path, columns=("L", "lattice_sum", "limit", "residual", "wall_time_s")):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)
