"""Raise the bottom of the unit square by c and compare three predictions.

The exact first eigenvalue of the y-mode is (pi / (1 - c))^2, so the boundary
formula, the nested volume formula and the FEM can all be checked against it.
"""

import math

import numpy as np

from neumann_hadamard.fem import assemble, build_mesh, eigen_lowest
from neumann_hadamard.geometry import PerturbationProfile, RectangleSpec, cluster_at, reference_spectrum
from neumann_hadamard.hadamard import boundary_correction, select_cluster, volume_correction

spec = RectangleSpec(1.0, 1.0)
cluster = cluster_at(reference_spectrum(spec, 10), 2)
print(f"cluster Lambda = {cluster.Lambda:.6f}, modes {[m.label() for m in cluster.modes]}")
print(f"{'c':>8} {'exact':>12} {'FEM':>12} {'boundary':>12} {'volume':>12} {'vol. linear':>12}")
for c in (0.02, 0.01, 0.005):
    prof = PerturbationProfile.uniform_shift(1.0, c)
    mesh = build_mesh(spec, prof, 128, 128)
    pair = assemble(mesh)
    fem = select_cluster(cluster, eigen_lowest(pair, 5))
    exact = (math.pi / (1 - c)) ** 2
    kb = boundary_correction(cluster, prof).entries[1, 1]
    kv = volume_correction(cluster, mesh, pair).entries[1, 1]
    kl = volume_correction(cluster, mesh, pair, quadratic=False).entries[1, 1]
    L = cluster.Lambda
    print(f"{c:8.4f} {exact:12.6f} {fem[1]:12.6f} {L + kb:12.6f} {L + kv:12.6f} {L + kl:12.6f}")

# the boundary remainder is 3 c^2 pi^2 + O(c^3); the quadratic volume term is O(c^2) with a large constant
print("3 c^2 pi^2 at c = 0.01:", 3 * 0.01**2 * math.pi**2)
print("remainders shrink like c^2:", np.round([3 * c**2 * math.pi**2 for c in (0.02, 0.01, 0.005)], 6))
