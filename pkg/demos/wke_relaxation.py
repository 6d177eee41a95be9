"""Relaxation of the wave kinetic equation towards its stationary state (d = 3)."""

import numpy as np

from wavekin.model import ForcingProfile, ModelParams
from wavekin.wke import WKESolver

params = ModelParams(d=3, L=8.0, forcing=ForcingProfile(1.0, 0.5), epsilon=0.1)
solver = WKESolver(params)
eps = [0.05, 0.1, 0.2]
traj = solver.solve(4.0, 0.05, eps)
z0 = solver.b2 / solver.gamma
for i, e in enumerate(eps):
    z_eps = solver.stationary(e)[0].values
    dist = [solver.norm(v - z_eps) for v in traj["z"][i]]
    dev = solver.norm(z_eps - z0) / e**2
    print(f"eps={e:<5} |z_eps - b^2/g|/eps^2 = {dev:.4f}   |z(tau) - z_eps| at tau = 0, 1, 2, 4: "
          + ", ".join(f"{dist[k]:.2e}" for k in (0, 20, 40, 80)))
