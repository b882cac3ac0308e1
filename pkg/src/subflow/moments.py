"""Kernel-weighted local moments of a point cloud.

Euclidean clouds use the plain weighted mean and covariance. On a
Riemannian geometry the differences ``x_i - p`` are replaced by Riemannian
logarithms and the weighted mean is pushed back to the manifold with the
exponential map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambient import Euclidean, as_geometry
from .errors import DimensionError, EmptyNeighborhood

MODES = ("centered_recomputed", "centered_cheap", "uncentered")


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel ``exp(-t^2 / (2 alpha^2))`` plus a weight cutoff.

    ``kind="constant"`` gives the alpha -> infinity limit in which every
    observation receives the same weight.
    """

    alpha: float
    cutoff: float = 1e-5
    kind: str = "gaussian"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.cutoff < 1.0:
            raise ValueError("cutoff must lie in [0, 1)")
        if self.kind not in ("gaussian", "constant"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def raw(self, sq_dist):
        """Unnormalized kernel values from squared distances."""
        sq_dist = np.asarray(sq_dist, dtype=float)
        if self.kind == "constant":
            return np.ones_like(sq_dist)
        return np.exp(-sq_dist / (2.0 * self.alpha**2))


@dataclass(frozen=True)
class MomentResult:
    weights: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    base: np.ndarray


def cloud_points(cloud):
    """Return the ``(N, D)`` array behind a cloud-like argument."""
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=float)
    if pts.ndim != 2:
        raise DimensionError("a cloud must be a 2-d array of shape (N, D)")
    return pts


def normalize_weights(raw, cutoff, axis=-1):
    """Normalize kernel values to the simplex, dropping entries below ``cutoff``.

    The largest weight is never dropped, so the result is always a valid
    simplex vector once the raw values have a positive sum.
    """
    total = raw.sum(axis=axis, keepdims=True)
    if np.any(total <= 0.0) or not np.all(np.isfinite(total)):
        raise EmptyNeighborhood("all kernel values underflowed")
    w = raw / total
    if cutoff > 0:
        floor = np.minimum(cutoff, w.max(axis=axis, keepdims=True))
        w = np.where(w >= floor, w, 0.0)
        w = w / w.sum(axis=axis, keepdims=True)
    return w


def weights(cloud, p, kernel, geom=None):
    """Normalized kernel weights of every observation relative to ``p``."""
    x = cloud_points(cloud)
    geom = as_geometry(geom, x.shape[1]) if geom is not None else Euclidean(x.shape[1])
    p = np.asarray(p, dtype=float)
    if p.shape != (x.shape[1],):
        raise DimensionError("query point does not match the cloud dimension")
    d = geom.dist(p, x)
    return normalize_weights(kernel.raw(d**2), kernel.cutoff)


def local_mean(cloud, p, kernel, geom=None):
    """Weighted mean around ``p``; on a manifold ``exp_p(sum_i w_i log_p x_i)``."""
    x = cloud_points(cloud)
    geom = as_geometry(geom, x.shape[1]) if geom is not None else Euclidean(x.shape[1])
    w = weights(x, p, kernel, geom)
    if isinstance(geom, Euclidean):
        return w @ x
    return geom.exp(p, w @ geom.log(p, x))


def tensor_coordinates(v, u, h_matrix):
    """Coordinate matrix ``v u^T h`` of the endomorphism ``v (x) u``.

    Batched inputs of shape ``(..., D)`` are accepted for ``v`` and ``u``.
    """
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    h = np.asarray(h_matrix, dtype=float)
    if v.shape[-1] != u.shape[-1] or h.shape[-2:] != (v.shape[-1], v.shape[-1]):
        raise DimensionError("incompatible shapes for the tensor coordinates")
    return (v[..., :, None] * u[..., None, :]) @ h


def second_moment(cloud, p, kernel, geom=None, mode="centered_cheap"):
    """Weighted second moment used by local PCA at ``p``.

    ``centered_recomputed`` centres at the local mean ``m`` with weights
    recomputed at ``m``; ``centered_cheap`` reuses the weights at ``p``;
    ``uncentered`` centres at ``p`` itself. The returned ``base`` is the point
    whose tangent space holds the matrix (``m`` or ``p``).
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    x = cloud_points(cloud)
    geom = as_geometry(geom, x.shape[1]) if geom is not None else Euclidean(x.shape[1])
    p = np.asarray(p, dtype=float)
    w_p = weights(x, p, kernel, geom)
    if mode == "uncentered":
        base, w = p, w_p
    else:
        base = local_mean(x, p, kernel, geom)
        w = weights(x, base, kernel, geom) if mode == "centered_recomputed" else w_p
    logs = geom.log(base, x)
    h = geom.metric_matrix(base)
    # sum_i w_i tensor_coordinates(l_i, l_i, h), without the (N, D, D) stack
    sigma = ((logs * w[:, None]).T @ logs) @ h
    mean = base if mode != "uncentered" else local_mean(x, p, kernel, geom)
    return MomentResult(weights=w, mean=mean, second_moment=sigma, base=base)
