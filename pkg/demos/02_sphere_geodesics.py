"""Normal geodesics on a noiseless sphere cloud.

Unit-speed geodesics leave the south pole (0, -1, 0) in several
directions. After time pi they should all arrive near the north pole
(0, 1, 0), staying on the unit sphere on the way.
"""

import numpy as np

from subflow import KernelConfig, PrincipalSubbundle, generate
from subflow.harness import gen_sphere_cloud

cloud = gen_sphere_cloud(2000, 2, 3, 0.0, seed=0)
field = PrincipalSubbundle(cloud, 2, KernelConfig(0.1, cutoff=1e-8))
mu = np.array([0.0, -1.0, 0.0])
sm = generate(cloud, mu, 2, 0.1, np.pi, 8, 1e-2, frames=field)

norms = np.linalg.norm(sm.points, axis=1)
print(f"{len(sm)} points, mean norm {norms.mean():.4f}, sd {norms.std():.4f}")
ends = sm.points[sm.index[:, 1] == sm.steps]
print("mean distance of endpoints to (0, 1, 0):", np.linalg.norm(ends - [0, 1, 0], axis=1).mean())
drift = np.nanmax(np.abs(sm.hamiltonian - 0.5), axis=1) / 0.5
print("largest relative Hamiltonian drift:", drift.max())
