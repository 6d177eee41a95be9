"""Damped/driven non-autonomous wave kinetic equation for radial spectra.

    d z / d tau = -2 gamma z + 2 b^2 + eps^2 K(tau)(z),   z(0) = 0.

The stepper freezes the kinetic term at the left endpoint and integrates
the linear part exactly:

    z(tau + h) = e^{-2 gamma h} z + (b^2 / gamma)(1 - e^{-2 gamma h})
                 + eps^2 (1 - e^{-2 gamma h}) / (2 gamma) K(tau)(z(tau)).

With eps = 0 this reproduces the linear solution to rounding.  Several
amplitudes can be advanced in lockstep so that kernel values, which only
depend on tau, are computed once per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinetic import KineticOperator, RadialField, default_base_radii
from .model import ModelParams, gamma_of_sq, weighted_norm

__all__ = [
    "WkeState",
    "WKESolver",
    "linear_solution",
]


def linear_solution(tau, params: ModelParams, knots):
    """z^0(tau) = (b^2 / gamma)(1 - exp(-2 gamma tau)) on the knots."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    knots = np.asarray(knots, dtype=float)
    y = knots**2
    g = gamma_of_sq(y, params.r_star)
    B = params.forcing.of_sq(y) ** 2 / g
    if np.isinf(tau):
        return RadialField(knots, B)
    return RadialField(knots, -B * np.expm1(-2 * g * tau))


@dataclass
class WkeState:
    """Solution snapshot; ``history`` holds |z|_r after every step."""

    tau: float
    z: RadialField
    epsilon: float
    h: float
    history: list = field(default_factory=list)

    def __post_init__(self):
        if not np.all(np.isfinite(self.z.values)):
            raise ValueError("non-finite solution values")
        if not (0 < self.h <= 0.5):
            raise ValueError("step h must lie in (0, 1/2]")


class WKESolver:
    """Exponential stepper for the WKE on a fixed radial grid.

    Parameters
    ----------
    params : ModelParams
        ``params.epsilon`` is the default amplitude.
    knots : array_like, optional
        Radii of the grid; by default 24 radii on [0, 8 sigma].
    orders, panels :
        Quadrature of the kinetic operator.
    constant :
        Lattice-to-continuum constant passed to :class:`KineticOperator`.
    r : float, optional
        Weight exponent of the reported norm; default d + 2.
    """

    def __init__(self, params: ModelParams, knots=None, orders=(16, 12, 16), panels=4,
                 constant=None, r=None):
        self.params = params
        if knots is None:
            if not math.isfinite(params.sigma):
                raise ValueError("a grid is required for a constant forcing profile")
            knots = default_base_radii(params.sigma)
        self.knots = np.asarray(knots, dtype=float)
        self.r = params.d + 2 if r is None else float(r)
        y = self.knots**2
        self.gamma = gamma_of_sq(y, params.r_star)
        self.b2 = params.forcing.of_sq(y) ** 2
        self.op = KineticOperator(params.d, params.r_star, self.knots[-1], self.knots,
                                  orders=orders, panels=panels, constant=constant, cache_size=2)

    # -- helpers ----------------------------------------------------------
    def norm(self, values):
        return weighted_norm(values, self.knots, self.r)

    def field(self, values):
        return RadialField(self.knots, values)

    def K(self, tau0, values):
        return self.op(tau0, self.field(values))

    def linear(self, tau):
        return linear_solution(tau, self.params, self.knots).values

    # -- stepping ---------------------------------------------------------
    def step_values(self, tau, values, eps, h):
        """One step for a stack of fields ``values`` (n, knots) with amplitudes ``eps`` (n,)."""
        values = np.atleast_2d(values)
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        decay = np.exp(-2 * self.gamma * h)
        gain = -np.expm1(-2 * self.gamma * h)
        out = decay * values + (self.b2 / self.gamma) * gain
        for i, e in enumerate(eps):
            if e != 0 and tau > 0:
                out[i] = out[i] + e * e * gain / (2 * self.gamma) * self.K(tau, values[i])
        return out

    def wke_step(self, state: WkeState):
        vals = self.step_values(state.tau, state.z.values, [state.epsilon], state.h)[0]
        new = WkeState(state.tau + state.h, self.field(vals), state.epsilon, state.h,
                       state.history + [self.norm(vals)])
        self._check(new.z.values)
        return new

    def _check(self, vals):
        if not np.all(np.isfinite(vals)):
            raise RuntimeError("outside small-eps regime: non-finite solution values")
        # the a priori ball |z| <= C |b^2| is only meaningful with forcing
        bnorm = self.norm(self.b2)
        if bnorm > 0 and self.norm(vals) > 10 * bnorm:
            raise RuntimeError("outside small-eps regime: the solution left the a priori ball")

    def solve(self, T, h=0.05, epsilons=None):
        """Integrate from z(0) = 0 up to T for one or several amplitudes.

        Returns
        -------
        dict with keys ``tau`` (n_steps + 1,), ``z`` (n_eps, n_steps + 1, n_knots),
        ``norm`` (n_eps, n_steps + 1), ``epsilons`` and ``sup_norm``.  The
        key ``negative`` counts steps with a negative grid value.
        """
        if T < 0:
            raise ValueError("T must be nonnegative")
        if not (0 < h <= 0.5):
            raise ValueError("step h must lie in (0, 1/2]")
        eps = np.atleast_1d(self.params.epsilon if epsilons is None else np.asarray(epsilons, float))
        n = int(round(T / h))
        if abs(n * h - T) > 1e-9 * max(T, 1):
            raise ValueError("T must be a multiple of h")
        Z = np.zeros((eps.size, n + 1, self.knots.size))
        for k in range(n):
            Z[:, k + 1] = self.step_values(k * h, Z[:, k], eps, h)
            for i in range(eps.size):
                self._check(Z[i, k + 1])
        norms = np.array([[self.norm(v) for v in zi] for zi in Z])
        negative = int(np.sum(np.any(Z < -1e-14 * np.abs(Z).max(initial=1.0), axis=2)))
        return {
            "tau": h * np.arange(n + 1),
            "z": Z,
            "norm": norms,
            "epsilons": eps,
            "sup_norm": norms.max(axis=1),
            "negative": negative,
        }

    # -- stationary state -------------------------------------------------
    def residual(self, values, eps):
        """|2 gamma z - eps^2 K(inf)(z) - 2 b^2|_r."""
        r = 2 * self.gamma * values - 2 * self.b2
        if eps:
            r = r - eps * eps * self.K(np.inf, values)
        return self.norm(r)

    def stationary(self, eps, tol=1e-10, maxiter=200):
        """Fixed point of z = (2 b^2 + eps^2 K(inf)(z)) / (2 gamma) from z = b^2 / gamma.

        Returns (RadialField, list of residuals).
        """
        z = self.b2 / self.gamma
        res = [self.residual(z, eps)]
        if eps == 0:
            return self.field(z), res
        for _ in range(maxiter):
            z = (2 * self.b2 + eps * eps * self.K(np.inf, z)) / (2 * self.gamma)
            res.append(self.residual(z, eps))
            if not np.isfinite(res[-1]) or res[-1] > 1e6 * res[0]:
                break
            if res[-1] <= tol:
                return self.field(z), res
        raise RuntimeError("eps too large: the stationary iteration does not contract")

    def long_time_check(self, eps, T=10.0, h=0.05, traj=None, z_eps=None):
        """Approach to the stationary state against the envelope C1 e^{-tau} + C2 eps^2.

        Two distances are tracked: dist = |z(tau) - z_eps|_r and the
        nonlinear remainder y = |z(tau) - (1 - e^{-2 gamma tau}) z_eps|_r.
        C1 = max dist e^tau and C2 = max y e^tau / eps^2 are fitted on the
        first half of the run; the envelope is then checked on the
        second half.
        """
        if traj is None:
            traj = self.solve(T, h, [eps])
        if z_eps is None:
            z_eps = self.stationary(eps)[0].values
        tau = traj["tau"]
        i = int(np.flatnonzero(np.atleast_1d(traj["epsilons"]) == eps)[0])
        Z = traj["z"][i]
        dist = np.array([self.norm(v - z_eps) for v in Z])
        lin = -np.expm1(-2 * np.outer(tau, self.gamma)) * z_eps
        rem = np.array([self.norm(v) for v in Z - lin])
        first = tau <= 0.5 * tau[-1]
        C1 = float(np.max(dist[first] * np.exp(tau[first])))
        C2 = float(np.max(rem[first] * np.exp(tau[first])) / (eps * eps)) if eps else 0.0
        env = C1 * np.exp(-tau) + C2 * eps * eps
        later = ~first
        return {"tau": tau, "distance": dist, "remainder": rem, "envelope": env,
                "C1": C1, "C2": C2,
                "holds": bool(np.all(dist[later] <= env[later])),
                "monotone_tail": bool(np.all(np.diff(dist[later]) <= 1e-15))}
