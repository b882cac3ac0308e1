"""Ambient Riemannian geometries: Euclidean space and the unit hypersphere.

Both geometries work on plain ``numpy`` arrays in extrinsic coordinates.
Points on the hypersphere ``S^d`` are unit vectors of length ``d + 1`` and
tangent vectors at ``p`` are the vectors orthogonal to ``p``, so the metric
matrix on the working basis is always the identity. The non-trivial metric
case is covered by :class:`SphericalChart`, a coordinate chart on ``S^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChartDomainError, CutLocusError, DimensionError

ANTIPODAL_TOL = 1e-9
_SMALL = 1e-14


def _check_last(arr, size, name):
    if arr.shape[-1] != size:
        raise DimensionError(f"{name} has trailing dimension {arr.shape[-1]}, expected {size}")


@dataclass(frozen=True)
class Euclidean:
    """Flat space R^dim."""

    dim: int

    @property
    def ambient_dim(self) -> int:
        return self.dim

    @property
    def kind(self) -> str:
        return "euclidean"

    def validate_point(self, p):
        p = np.asarray(p, dtype=float)
        _check_last(p, self.dim, "point")
        return p

    def exp(self, p, v):
        p = self.validate_point(p)
        v = np.asarray(v, dtype=float)
        _check_last(v, self.dim, "tangent vector")
        return p + v

    def log(self, p, q):
        p = self.validate_point(p)
        q = self.validate_point(q)
        return q - p

    def dist(self, p, q):
        return np.linalg.norm(self.log(p, q), axis=-1)

    def transport(self, x, y, v):
        self.validate_point(x)
        self.validate_point(y)
        v = np.asarray(v, dtype=float)
        _check_last(v, self.dim, "tangent vector")
        return v.copy()

    def metric_matrix(self, p=None):
        return np.eye(self.dim)

    def project_tangent(self, p, v):
        return np.asarray(v, dtype=float)

    def retract(self, p):
        return np.asarray(p, dtype=float)

    def tangent_basis(self, p):
        return np.eye(self.dim)


@dataclass(frozen=True)
class Hypersphere:
    """The unit sphere S^dim stored extrinsically in R^(dim + 1)."""

    dim: int

    @property
    def ambient_dim(self) -> int:
        return self.dim + 1

    @property
    def kind(self) -> str:
        return "hypersphere"

    def validate_point(self, p, tol=1e-9):
        p = np.asarray(p, dtype=float)
        _check_last(p, self.ambient_dim, "point")
        norms = np.linalg.norm(p, axis=-1)
        if np.any(np.abs(norms - 1.0) > tol):
            raise DimensionError("hypersphere points must have unit norm")
        return p

    def exp(self, p, v):
        """Point reached by the great circle from ``p`` with velocity ``v``."""
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        _check_last(p, self.ambient_dim, "point")
        _check_last(v, self.ambient_dim, "tangent vector")
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(nv < _SMALL, 1.0, nv)
        out = np.cos(nv) * p + np.sin(nv) * v / safe
        return np.where(nv < _SMALL, p * np.ones_like(out), out)

    def log(self, p, q):
        """Initial velocity of the minimizing great arc from ``p`` to ``q``.

        ``p`` may be a single point while ``q`` is a batch, or both may be
        broadcastable batches.
        """
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        _check_last(p, self.ambient_dim, "point")
        _check_last(q, self.ambient_dim, "point")
        c = np.sum(p * q, axis=-1, keepdims=True)
        if np.any(c <= -1.0 + ANTIPODAL_TOL):
            raise CutLocusError("log requested between (near) antipodal points")
        u = q - c * p
        s = np.linalg.norm(u, axis=-1, keepdims=True)
        theta = np.arctan2(s, c)
        scale = np.where(s < _SMALL, 1.0, theta / np.where(s < _SMALL, 1.0, s))
        return scale * u

    def dist(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        c = np.sum(p * q, axis=-1)
        s = np.linalg.norm(q - c[..., None] * p, axis=-1)
        return np.arctan2(s, c)

    def transport(self, x, y, v):
        """Parallel transport of ``v`` from ``x`` to ``y`` along the great arc.

        ``v`` may hold several vectors stacked along leading axes or, when
        given as a ``(D, k)`` frame, along the last axis; see
        :meth:`transport_frame`.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        _check_last(v, self.ambient_dim, "tangent vector")
        u = self.log(x, y)
        theta = np.linalg.norm(u, axis=-1, keepdims=True)
        if np.all(theta < _SMALL):
            return v.copy()
        uhat = u / np.where(theta < _SMALL, 1.0, theta)
        coef = np.sum(uhat * v, axis=-1, keepdims=True)
        out = v - coef * (uhat * (1.0 - np.cos(theta)) + x * np.sin(theta))
        return np.where(theta < _SMALL, v, out)

    def transport_frame(self, x, y, frame):
        """Transport each column of a ``(D, k)`` frame from ``x`` to ``y``."""
        return self.transport(x, y, np.asarray(frame).T).T

    def metric_matrix(self, p=None):
        return np.eye(self.ambient_dim)

    def project_tangent(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        return v - np.sum(v * p, axis=-1, keepdims=True) * p

    def retract(self, p):
        p = np.asarray(p, dtype=float)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def tangent_basis(self, p):
        """Orthonormal ``(dim + 1, dim)`` basis of the tangent space at ``p``."""
        p = np.asarray(p, dtype=float)
        q, _ = np.linalg.qr(np.column_stack([p, np.eye(self.ambient_dim)]))
        basis = q[:, 1:self.ambient_dim]
        return basis - np.outer(p, p @ basis)


@dataclass(frozen=True)
class SphericalChart:
    """Polar/azimuth coordinates ``(theta, phi)`` on S^2, poles excluded.

    The coordinate basis is orthogonal but not orthonormal; the metric matrix
    is ``diag(1, sin(theta)^2)``.
    """

    pole_tol: float = 1e-12

    def _check(self, theta):
        theta = np.asarray(theta, dtype=float)
        if np.any(theta <= 0.0) or np.any(theta >= np.pi) or np.any(np.sin(theta) < self.pole_tol):
            raise ChartDomainError("spherical chart is undefined at the poles")
        return theta

    def metric_matrix(self, coords):
        theta = self._check(np.asarray(coords, dtype=float)[..., 0])
        out = np.zeros(theta.shape + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = np.sin(theta) ** 2
        return out

    def to_ambient(self, coords):
        coords = np.asarray(coords, dtype=float)
        theta = self._check(coords[..., 0])
        phi = coords[..., 1]
        return np.stack(
            [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1
        )

    def jacobian(self, coords):
        """Columns are the coordinate basis vectors d/dtheta, d/dphi in R^3."""
        coords = np.asarray(coords, dtype=float)
        theta = self._check(coords[..., 0])
        phi = coords[..., 1]
        d_theta = np.stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)], -1)
        d_phi = np.stack([-np.sin(theta) * np.sin(phi), np.sin(theta) * np.cos(phi), np.zeros_like(phi)], -1)
        return np.stack([d_theta, d_phi], axis=-1)


def as_geometry(geom, dim=None):
    """Accept a geometry instance or a short name (``"euclidean"``/``"sphere"``)."""
    if isinstance(geom, (Euclidean, Hypersphere)):
        return geom
    if geom is None or geom == "euclidean":
        if dim is None:
            raise ValueError("dimension required to build a Euclidean geometry")
        return Euclidean(dim)
    if geom in ("sphere", "hypersphere"):
        if dim is None:
            raise ValueError("dimension required to build a Hypersphere geometry")
        return Hypersphere(dim - 1)
    raise ValueError(f"unknown geometry {geom!r}")
