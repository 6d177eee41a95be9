"""Normalised resonant lattice sums against their continuum limit (d = 3, Gaussian weight).

Prints S_L,2 for doubling L next to C_3 times the quadric integral and next
to the constant zeta(2)/zeta(3) that the sums actually approach.
"""

import numpy as np

from wavekin.lattice import gaussian_test
from wavekin.quadrature import C_d, sigma_integral, singular_series_constant, heath_brown_check

phi = gaussian_test(3)
integral = sigma_integral(phi, np.zeros(3))
rows = heath_brown_check(phi, 3, [4, 8, 16, 32], integral=integral)
alt = singular_series_constant(3) * integral
print(f"integral over the quadric: {integral:.6f} (2 pi^2 = {2 * np.pi**2:.6f})")
print(f"{'L':>4} {'S_L,2':>10} {'C_3 * I':>10} {'rel':>8} {'zeta(2)/zeta(3) * I':>20} {'rel':>8}")
for r in rows:
    S = r["lattice_sum"]
    print(f"{r['L']:>4} {S:>10.5f} {C_d(3) * integral:>10.5f} {r['residual']:>8.4f} {alt:>20.5f} "
          f"{abs(S - alt) / alt:>8.4f}")
