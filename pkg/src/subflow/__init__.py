"""Principal subbundles of point clouds and their sub-Riemannian geometry.

Typical use::

    frames = PrincipalSubbundle(points, k=2, kernel=KernelConfig(0.1))
    path = integrate(frames, p0, eta0, T=1.0, delta=1e-3)
    sm = generate(points, mu, k=2, alpha=0.1, r=0.5, L=64, delta=1e-2, frames=frames)
    d = sr_distance(frames, x, y)
"""

from .ambient import Euclidean, Hypersphere, SphericalChart, as_geometry
from .errors import (ChartDomainError, CloudFormatError, CutLocusError, DimensionError, DivergenceError,
                     EmptyNeighborhood, NoDescentError, NoSubmanifoldInRange, SingularPointError,
                     SubflowError)
from .geodesics import (CotangentState, GeodesicBatch, GeodesicPath, hamiltonian, hamiltonian_gradients,
                        integrate, integrate_batch, sr_exp, sr_exp_batch)
from .logmap import LogOptions, LogResult, sr_distance, sr_log
from .moments import KernelConfig, MomentResult, local_mean, second_moment, tensor_coordinates, weights
from .subbundle import (Cometric, ConstantFrameField, FrameField, PrincipalSubbundle, SphereTangentField,
                        SubbundleFrame, cometric, principal_flow_frame, principal_frame)
from .submanifold import (PrincipalSubmanifold, combine, frechet_base_point, generate, project_continuous,
                          project_discrete, unit_directions)

__all__ = [
    "ChartDomainError", "CloudFormatError", "Cometric", "ConstantFrameField", "CotangentState",
    "CutLocusError", "DimensionError", "DivergenceError", "EmptyNeighborhood", "Euclidean", "FrameField",
    "GeodesicBatch", "GeodesicPath", "Hypersphere", "KernelConfig", "LogOptions", "LogResult",
    "MomentResult", "NoDescentError", "NoSubmanifoldInRange", "PrincipalSubbundle", "PrincipalSubmanifold",
    "SingularPointError", "SphereTangentField", "SphericalChart", "SubbundleFrame", "SubflowError",
    "as_geometry", "cometric", "combine", "frechet_base_point", "generate", "hamiltonian",
    "hamiltonian_gradients", "integrate", "integrate_batch", "local_mean", "principal_flow_frame",
    "principal_frame", "project_continuous", "project_discrete", "second_moment", "sr_distance", "sr_exp",
    "sr_exp_batch", "sr_log", "tensor_coordinates", "unit_directions", "weights",
]
