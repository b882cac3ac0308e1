"""Shooting a covector and recovering it with the logarithm.

A covector of length 0.3 is shot from p on a planar cloud, and the log
map recovers it from the endpoint alone. On the plane the sub-Riemannian
distance is the Euclidean one, and a point off the plane can only be
reached up to its normal offset.
"""

import numpy as np

from subflow import KernelConfig, LogOptions, PrincipalSubbundle, sr_distance, sr_exp, sr_log

g = np.linspace(-1.0, 1.0, 41)
u, v = np.meshgrid(g, g)
plane = np.column_stack([u.ravel(), v.ravel(), np.zeros(u.size)])
field = PrincipalSubbundle(plane, 2, KernelConfig(0.3))

p = np.array([0.1, -0.1, 0.0])
eta0 = 0.3 * np.array([0.6, 0.8, 0.0])
y = sr_exp(field, p, eta0, delta=1e-3)
res = sr_log(field, p, y)
print("eta0      ", eta0)
print("recovered ", res.eta_hat, "residual", res.residual)

opts = LogOptions(n_random=1)
print("distance to (0.3, 0.2, 0):", sr_distance(field, p, np.array([0.3, 0.2, 0.0]), opts=opts),
      "euclidean:", np.hypot(0.2, 0.3))
off = sr_log(field, p, np.array([0.2, -0.1, 0.05]), opts=opts)
print("off-plane target, residual:", off.residual)
