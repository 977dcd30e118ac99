"""Certified distances between oscillator eigenstates on a truncated Moyal plane.

Every row shows the solver interval next to the closed form, then the same
points placed on a half-line, where the distances become plain differences.
"""

import numpy as np

from ncgeom import moyal
from ncgeom.distance import spectral_distance_even

theta, N = 1.0, 12
M = moyal.truncation(N, theta)
print(f"truncation N={N}, theta={theta}; D^2 interior levels: {np.unique(np.round(moyal.spectrum(M)[:8], 10))}")

print(f"{'m':>2} {'n':>2} {'lower':>14} {'upper':>14} {'formula':>14}")
for m in range(4):
    for n in range(m + 1, 5):
        r = spectral_distance_even(M.triple, moyal.eigenstate(M, m), moyal.eigenstate(M, n))
        f = moyal.eigenstate_distance_formula(m, n, theta)
        print(f"{m:>2} {n:>2} {r.lower:14.10f} {r.upper:14.10f} {f:14.10f}")

X = moyal.EmbeddedEigenstateSpace(theta, 6)
print("\nembedded points x_m:", np.round(X.points, 6))
print("embedding checks pass:", X.check().passed)

# the points thin out as theta shrinks
for t in (1.0, 0.5, 0.25, 0.125):
    h = moyal.gh_experiment(t, 10)["hausdorff_distance"]
    print(f"theta={t:<6} Hausdorff distance to the interval: {h:.6f}")
