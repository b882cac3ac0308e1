"""Reference curves and the curve-fit error used in the sphere curve study."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ambient import Euclidean, Hypersphere, as_geometry
from ..moments import cloud_points

CURVE_POINTS = 2000


@dataclass
class GeodesicCurve:
    """Discretized geodesic ``t -> exp_base(t v)`` for ``t`` in ``t_range``."""

    base: np.ndarray
    direction: np.ndarray
    t_range: tuple
    points: np.ndarray
    explained: float
    degenerate: bool = False


def tangent_pca_geodesic(cloud, base, geom=None, n_points=CURVE_POINTS, tol=1e-14):
    """First principal geodesic from PCA of the logarithms at ``base``.

    The curve spans the range of the projections of the logs onto the top
    eigenvector. Zero-spread data give a ``degenerate`` curve at ``base``.
    """
    x = cloud_points(cloud)
    geom = as_geometry(geom if geom is not None else getattr(cloud, "geometry", None), x.shape[1])
    base = np.asarray(base, dtype=float)
    v = geom.log(base, x)
    v = v - v.mean(axis=0)
    vals, vecs = np.linalg.eigh(v.T @ v / len(x))
    top = vecs[:, -1]
    if vals[-1] <= tol * max(1.0, float(np.max(np.abs(x)))) ** 2:
        return GeodesicCurve(base, np.zeros_like(base), (0.0, 0.0), base[None].copy(), 0.0, True)
    top = top * (1.0 if top[np.argmax(np.abs(top))] > 0 else -1.0)
    proj = geom.log(base, x) @ top
    lo, hi = float(proj.min()), float(proj.max())
    t = np.linspace(lo, hi, n_points)
    pts = geom.exp(base, t[:, None] * top[None])
    return GeodesicCurve(base, top, (lo, hi), pts, float(vals[-1] / vals.sum()), False)


def resample_polyline(points, n=CURVE_POINTS, geom=None):
    """``n`` points equally spaced in arc length along a polyline.

    On a sphere each segment is treated as a great arc.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return np.repeat(pts[:1], n, axis=0)
    sphere = isinstance(geom, Hypersphere)
    seg = geom.dist(pts[:-1], pts[1:]) if sphere else np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(pts[:1], n, axis=0)
    target = np.linspace(0.0, s[-1], n)
    j = np.clip(np.searchsorted(s, target, side="right") - 1, 0, len(seg) - 1)
    frac = np.where(seg[j] > 0, (target - s[j]) / np.where(seg[j] > 0, seg[j], 1.0), 0.0)
    if sphere:
        v = geom.log(pts[j], pts[j + 1])
        return geom.exp(pts[j], frac[:, None] * v)
    return pts[j] + frac[:, None] * (pts[j + 1] - pts[j])


def distance_to_curve(cloud, curve_points, geom=None, chunk=1024):
    """Distance from each observation to its nearest curve point."""
    x = cloud_points(cloud)
    c = np.asarray(curve_points, dtype=float)
    geom = geom if geom is not None else getattr(cloud, "geometry", None) or Euclidean(x.shape[1])
    sc = np.sum(c**2, axis=1)
    best = np.empty(len(x), dtype=int)
    for lo in range(0, len(x), chunk):
        q = x[lo:lo + chunk]
        best[lo:lo + chunk] = np.argmin(sc[None] - 2.0 * q @ c.T, axis=1)
    chord = np.linalg.norm(x - c[best], axis=1)
    if isinstance(geom, Hypersphere):
        # nearest in chord length is nearest in arc length on the unit sphere
        return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))
    return chord


def sse_to_curve(cloud, curve_points, geom=None):
    """Sum of squared distances from the observations to a discretized curve."""
    return float(np.sum(distance_to_curve(cloud, curve_points, geom) ** 2))
