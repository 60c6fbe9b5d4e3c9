"""Finite Moran population against its diffusion limit.

Start both models from the equilibrium site field, run them for t = 0.2
diffusion time units and compare the number of segregating sites in
frequency bins, then the expected number of fixations.

    python3 demos/moran_vs_diffusion.py
"""

import numpy as np
from scipy.integrate import quad

from prfpoly import FiniteParams, InitialMeasure, ScaledParams, expected_site_counts, fixation_mean, prf_density

beta = ScaledParams(t=0.2, theta=1.0, gamma=1.0)
nu = InitialMeasure.equilibrium(beta.theta, beta.gamma)
edges = np.arange(0.1, 0.91, 0.2)
d = prf_density(beta, nu)

# Moran state j stands for the frequency cell [(j - 1/2)/N, (j + 1/2)/N), so
# the matching diffusion bin is shifted by half a cell
print("relative error of Moran bin counts against the diffusion")
print("bin              N=50       N=100      N=200")
errs, fixed = {}, {}
for N in (50, 100, 200):
    fp = FiniteParams.from_scaled(N, beta)
    omega = np.array([quad(nu.density, (j - 0.5) / N, min((j + 0.5) / N, 1.0))[0] for j in range(1, N)])
    field = expected_site_counts(fp, omega)
    ref = np.array([d.bin_mass(lo - 0.5 / N, hi - 0.5 / N) for lo, hi in zip(edges[:-1], edges[1:])])
    errs[N] = field.bin_sums(edges) / ref - 1
    fixed[N] = field.fixed_mean

for b, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
    print(f"[{lo:.2f}, {hi:.2f})  " + "  ".join(f"{errs[N][b]:+9.5f}" for N in (50, 100, 200)))

fm = fixation_mean(beta, nu)
print(f"\nexpected fixations: diffusion {fm.total:.5f} (legacy {fm.legacy:.5f}, new {fm.new:.5f})")
print("Moran: " + ", ".join(f"N={N} {fixed[N]:.5f}" for N in (50, 100, 200)))
