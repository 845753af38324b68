"""Why the boundary formula fails for an oscillating bottom.

Two coarse sweep points on a sawtooth bottom.  The boundary formula predicts
no first-order shift for the (1,0) pair, yet the FEM shift is negative and
halves with delta.  The homogenized formula captures the first-order part,
-delta eta1 4 pi^2; what is left over is O(delta^2) with a sizeable constant.
The full study (`nh sharpness`) refines this to four delta values with
extrapolated truth.
"""

import math

from neumann_hadamard.experiments import extrapolated_eta1
from neumann_hadamard.fem import assemble, build_mesh, eigen_lowest, layer_levels
from neumann_hadamard.geometry import PerturbationProfile, RectangleSpec, cluster_at, reference_spectrum, sawtooth
from neumann_hadamard.hadamard import boundary_correction, homogenized_correction, select_cluster

spec = RectangleSpec(1.0, 1.0, "periodic")
cluster = cluster_at(reference_spectrum(spec, 12), 3)
eta = sawtooth()
eta1, cells = extrapolated_eta1(eta, (64, 128, 256))
print(f"eta0 = {eta.mean}, eta1 ~ {eta1:.4f} (coarse cells)")
cell = cells[-1]

for delta in (1 / 8, 1 / 16):
    prof = PerturbationProfile.oscillation(1.0, eta, delta)
    p = 32
    lv = layer_levels(delta / p, 0.02, 1.15)
    mesh = build_mesh(spec, prof, p * prof.params["N"], len(lv) - 1, lv, blend=4 * delta)
    flat = build_mesh(spec, None, p * prof.params["N"], len(lv) - 1, lv)
    shift = select_cluster(cluster, eigen_lowest(assemble(mesh), 6), 2) - select_cluster(
        cluster, eigen_lowest(assemble(flat), 6), 2
    )
    kb = boundary_correction(cluster, prof).eigenvalues()
    kh = homogenized_correction(cluster, cell, delta).eigenvalues()
    print(f"delta = 1/{round(1 / delta)}: FEM shift {shift.round(4)}")
    print(f"   boundary {kb.round(4)}   homogenized {kh.round(4)}")
print("predicted first-order defect eta1 * 4 pi^2 =", round(eta1 * 4 * math.pi**2, 4))
