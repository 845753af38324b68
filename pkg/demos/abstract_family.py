"""One seeded finite-dimensional instance, and how the remainder scales with t."""

import numpy as np

from neumann_hadamard.abstract_core import InstanceConfig, build_instance, extract_cluster, verify_cluster

for t in (1e-2, 1e-3, 1e-4):
    inst = build_instance(7, InstanceConfig(N=12, n1=8, n2=8, perturbation_scale=t))
    cluster = extract_cluster(inst, 2)
    v = verify_cluster(inst, cluster)
    c = v.constants
    print(
        f"t={t:.0e}  eps={c.epsilon:.2e}  rho={c.rho:.2e}  tau={np.abs(v.tau_values).max():.3e}  "
        f"remainder={v.remainders.max():.3e}  bound_ratio={v.bound_ratio:.2f}"
    )
# tau is first order in t, the remainder second order
