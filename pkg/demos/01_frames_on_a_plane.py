"""Principal frames and the cometric on a flat and on a curved cloud.

On a planar grid the rank-2 cometric is the orthogonal projection onto the
plane. On a sphere it is the projection onto the tangent plane, up to the
kernel-scale error.
"""

import numpy as np

from subflow import KernelConfig, PrincipalSubbundle
from subflow.harness import gen_sphere_cloud

g = np.linspace(-1.0, 1.0, 41)
u, v = np.meshgrid(g, g)
plane = np.column_stack([u.ravel(), v.ravel(), np.zeros(u.size)])

field = PrincipalSubbundle(plane, 2, KernelConfig(0.3))
fr = field.frame(np.array([0.2, -0.1, 0.0]))
print("planar cometric:\n", np.round(fr.cometric.matrix, 12))
print("eigen gap:", fr.gap)

cloud = gen_sphere_cloud(2000, 2, 3, 0.0, seed=0)
sphere = PrincipalSubbundle(cloud, 2, KernelConfig(0.1, cutoff=1e-8))
p = np.array([0.0, 0.6, 0.8])
G = sphere.frame(p).cometric.matrix
exact = np.eye(3) - np.outer(p, p)
print("sphere: |G - (I - p p^T)| =", np.abs(G - exact).max())
