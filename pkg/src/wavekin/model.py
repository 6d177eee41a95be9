"""Model data shared by every other module.

Dissipation spectrum, forcing profile, amplitude scaling and the weighted
sup-norms used to measure spectral fields.  Frequencies are arrays whose
last axis has length ``d``; everything broadcasts over leading axes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

__all__ = [
    "ForcingProfile",
    "ModelParams",
    "gamma",
    "gamma_of_sq",
    "B_coeff",
    "chi_d",
    "rho",
    "bracket",
    "weighted_norm",
    "smooth_seminorm",
    "load_params",
    "dump_params",
]


@dataclass(frozen=True)
class ForcingProfile:
    """Radial Gaussian forcing b(s) = b0 exp(-|s|^2 / (2 sigma^2)).

    ``b0`` may be negative; only b^2 enters the dynamics of second
    moments.  ``sigma = inf`` gives the constant profile b = b0.
    """

    b0: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("forcing width sigma must be positive")

    def of_sq(self, y):
        """b as a function of |s|^2."""
        y = np.asarray(y, dtype=float)
        if math.isinf(self.sigma):
            return np.full_like(y, self.b0)
        return self.b0 * np.exp(-y / (2.0 * self.sigma**2))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return self.of_sq(np.sum(s * s, axis=-1))


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the damped/driven model.

    Attributes
    ----------
    d : int
        Space dimension, at least 2.
    L : float
        Period of the torus, at least 2.
    r_star : float
        Exponent of the dissipation profile gamma0(y) = (1 + y)^r_star.
    forcing : ForcingProfile
        Random forcing amplitude profile.
    epsilon : float
        Amplitude parameter in (0, 1/2].
    """

    d: int = 3
    L: float = 2.0
    r_star: float = 1.0
    forcing: ForcingProfile = field(default_factory=ForcingProfile)
    epsilon: float = 0.1

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError("dimension d must be an integer >= 2")
        if not self.L >= 2:
            raise ValueError("box size L must be >= 2")
        if not self.r_star > 0:
            raise ValueError("r_star must be positive")
        if not (0 < self.epsilon <= 0.5):
            raise ValueError("epsilon must lie in (0, 1/2]")

    @property
    def b0(self):
        return self.forcing.b0

    @property
    def sigma(self):
        return self.forcing.sigma

    def gamma0(self, y):
        """Monotone dissipation profile as a function of |s|^2."""
        return gamma_of_sq(y, self.r_star)

    def b(self, s):
        return self.forcing(s)

    def to_dict(self):
        return {
            "d": self.d,
            "L": self.L,
            "r_star": self.r_star,
            "b0": self.forcing.b0,
            "sigma": self.forcing.sigma,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, cfg):
        allowed = {"d", "L", "r_star", "b0", "sigma", "epsilon"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        dflt = cls()
        return cls(
            d=int(cfg.get("d", dflt.d)),
            L=float(cfg.get("L", dflt.L)),
            r_star=float(cfg.get("r_star", dflt.r_star)),
            forcing=ForcingProfile(
                b0=float(cfg.get("b0", dflt.b0)),
                sigma=float(cfg.get("sigma", dflt.sigma)),
            ),
            epsilon=float(cfg.get("epsilon", dflt.epsilon)),
        )


def gamma_of_sq(y, r_star=1.0):
    """gamma0(y) = (1 + y)^r_star for y = |s|^2 >= 0."""
    return np.power(1.0 + np.asarray(y, dtype=float), r_star)


def gamma(s, params: ModelParams):
    """Dissipation rate gamma_s = gamma0(|s|^2) >= 1."""
    s = np.asarray(s, dtype=float)
    return params.gamma0(np.sum(s * s, axis=-1))


def B_coeff(s, params: ModelParams):
    """Stationary variance B_s = b(s)^2 / gamma_s of the linear process."""
    s = np.asarray(s, dtype=float)
    y = np.sum(s * s, axis=-1)
    return params.forcing.of_sq(y) ** 2 / params.gamma0(y)


def chi_d(L, d):
    """Logarithmic correction: 1 for d >= 3 and (ln L)^(-1/2) for d = 2."""
    if d >= 3:
        return 1.0
    return 1.0 / math.sqrt(math.log(L))


def rho(params: ModelParams):
    """Nonlinearity strength rho = epsilon L chi_d(L)."""
    return params.epsilon * params.L * chi_d(params.L, params.d)


def bracket(z):
    """<z> = max(|z|, 1) over the last axis."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        return max(abs(float(z)), 1.0)
    return np.maximum(np.linalg.norm(z, axis=-1), 1.0)


def _grid_radii(grid):
    g = np.asarray(grid, dtype=float)
    if g.ndim <= 1:
        return np.abs(g)
    return np.linalg.norm(g, axis=-1)


def weighted_norm(values, grid, r):
    """Grid supremum of |f(z)| <z>^r.

    ``grid`` holds either radii (1-d array, as for radial fields) or
    points with coordinates along the last axis.  This approximates the
    continuum supremum from below.
    """
    f = np.abs(np.asarray(values))
    if f.size == 0:
        raise ValueError("empty grid: the field is not defined anywhere")
    rad = _grid_radii(grid)
    if rad.shape != f.shape:
        raise ValueError("values and grid do not match")
    if not np.all(np.isfinite(f)):
        raise ValueError("field has non-finite values")
    return float(np.max(f * np.maximum(rad, 1.0) ** r))


def smooth_seminorm(f, n1, n2, axes):
    """Grid version of ||f||_{n1,n2} = sup max_{|a|<=n1} |d^a f| <z>^n2.

    Parameters
    ----------
    f : callable
        Vectorised function of points of shape (..., m).
    n1 : int
        Highest derivative order.
    n2 : float
        Weight exponent.
    axes : sequence of 1-d arrays
        Uniform grid along each of the m coordinates.  Derivatives are
        central differences of the grid spacing, so only interior points
        at distance >= n1 from the boundary are used.
    """
    if n1 < 0:
        raise ValueError("n1 must be nonnegative")
    axes = [np.asarray(a, dtype=float) for a in axes]
    steps = []
    for a in axes:
        if a.size < 2:
            raise ValueError("each grid axis needs at least two points")
        h = np.diff(a)
        if np.any(h <= 0) or not np.allclose(h, h[0]):
            raise ValueError("grid axes must be uniform and increasing")
        steps.append(h[0])
    m = len(axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = np.asarray(f(mesh), dtype=float)
    inner = tuple(slice(n1, a.size - n1) for a in axes)
    if any(sl.start >= sl.stop for sl in inner):
        raise ValueError("grid too small for the requested derivative order")
    weight = bracket(mesh[inner]) ** n2
    best = 0.0
    for alpha in product(range(n1 + 1), repeat=m):
        if sum(alpha) > n1:
            continue
        der = vals
        for ax, k in enumerate(alpha):
            for _ in range(k):
                der = (np.roll(der, -1, axis=ax) - np.roll(der, 1, axis=ax)) / (2 * steps[ax])
        best = max(best, float(np.max(np.abs(der[inner]) * weight)))
    return best


def load_params(path):
    """Read ModelParams from a JSON document with keys d, L, r_star, b0, sigma, epsilon."""
    with open(Path(path)) as fh:
        cfg = json.load(fh)
    return ModelParams.from_dict(cfg)


def dump_params(params: ModelParams, path):
    with open(Path(path), "w") as fh:
        json.dump(params.to_dict(), fh, indent=2, sort_keys=True)
