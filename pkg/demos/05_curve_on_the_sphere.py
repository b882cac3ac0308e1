"""One dataset of the sphere curve study.

Noisy samples around a quartic curve on the 2-sphere are fitted with a
centered principal submanifold (k = 1), its uncentered variant (the
principal flow) and the first principal geodesic. Lower SSE is better.
"""

from subflow.harness import default_config
from subflow.harness.experiments import curve_replicate

cfg = default_config("sec6.4", seed=0)
sse, log = curve_replicate(cfg, 0)
for name, value in sse.items():
    print(f"{name:>20s}  SSE = {value:.5f}")
print(len(log), "geodesics stopped early")
