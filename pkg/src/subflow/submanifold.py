"""Principal submanifolds: point sets swept by normal geodesics from a base point.

A principal submanifold of radius ``r`` at ``mu`` is the image of the ball
of radius ``r`` in the dual subbundle under the sub-Riemannian exponential.
It is represented by the points ``p_ij`` reached after ``j`` steps of size
``delta`` along ``L`` unit-speed geodesics. The covector direction ``c_i``
(coefficients in the frame at ``mu``) times the arc length ``j * delta``
gives a chart coordinate in ``R^k``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .ambient import Euclidean, Hypersphere, as_geometry
from .errors import NoSubmanifoldInRange
from .geodesics import integrate_batch, sr_exp
from .logmap import LogOptions, sr_log
from .moments import KernelConfig, cloud_points, local_mean
from .subbundle import FrameField, PrincipalSubbundle


@dataclass
class PrincipalSubmanifold:
    """Stored geodesic grid; row 0 of ``points`` is ``mu`` with index (0, 0)."""

    mu: np.ndarray
    r: float
    k: int
    alpha: float
    L: int
    delta: float
    frame: np.ndarray
    directions: np.ndarray
    points: np.ndarray
    index: np.ndarray
    arclen: np.ndarray
    chart: np.ndarray
    log: list = field(default_factory=list)
    hamiltonian: np.ndarray | None = None

    @property
    def covectors(self):
        """Unit-speed initial covectors ``eta_i = F_mu c_i``, shape ``(L, D)``."""
        return self.directions @ self.frame.T

    @property
    def steps(self):
        return int(np.floor(self.r / self.delta + 1e-9))

    def __len__(self):
        return len(self.points)

    def to_csv(self, path):
        """Write rows ``i, j, arclen, point coords..., chart coords...``."""
        D = self.points.shape[1]
        header = ["i", "j", "arclen"] + [f"x{c}" for c in range(D)] + [f"u{c}" for c in range(self.k)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for (i, j), a, pt, ch in zip(self.index, self.arclen, self.points, self.chart):
                w.writerow([int(i), int(j), repr(float(a))] + [repr(float(v)) for v in pt]
                           + [repr(float(v)) for v in ch])

    def save(self, path):
        """Compact binary cache (``.npz``)."""
        np.savez_compressed(
            path, mu=self.mu, r=self.r, k=self.k, alpha=self.alpha, L=self.L, delta=self.delta,
            frame=self.frame, directions=self.directions, points=self.points, index=self.index,
            arclen=self.arclen, chart=self.chart,
        )

    @classmethod
    def load(cls, path):
        z = np.load(path)
        return cls(
            mu=z["mu"], r=float(z["r"]), k=int(z["k"]), alpha=float(z["alpha"]), L=int(z["L"]),
            delta=float(z["delta"]), frame=z["frame"], directions=z["directions"],
            points=z["points"], index=z["index"], arclen=z["arclen"], chart=z["chart"],
        )


def unit_directions(k, L, seed=0):
    """``L`` unit vectors in ``R^k`` used as initial covector coefficients.

    k=1 alternates +1 and -1; k=2 uses a uniform angular grid; k=3 a
    Fibonacci spiral; larger k uniform random draws from ``seed``.
    """
    if k < 1 or L < 1:
        raise ValueError("k and L must be positive")
    if k == 1:
        return np.where(np.arange(L) % 2 == 0, 1.0, -1.0)[:, None]
    if k == 2:
        th = 2.0 * np.pi * np.arange(L) / L
        return np.column_stack([np.cos(th), np.sin(th)])
    if k == 3:
        i = np.arange(L) + 0.5
        z = 1.0 - 2.0 * i / L
        rho = np.sqrt(1.0 - z**2)
        phi = np.pi * (1.0 + np.sqrt(5.0)) * i
        return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    u = np.random.default_rng(seed).normal(size=(L, k))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _as_frames(cloud, k, alpha, geom, mode, frames):
    if frames is not None:
        return frames
    if isinstance(cloud, FrameField):
        return cloud
    kernel = alpha if isinstance(alpha, KernelConfig) else KernelConfig(float(alpha))
    return PrincipalSubbundle(cloud, k, kernel, geometry=geom, mode=mode)


def generate(cloud, mu, k, alpha, r, L, delta, geom=None, mode="centered_cheap", scheme="euler",
             gradient="fd", seed=0, frames=None, truncated="exclude"):
    """Point-set representation of the principal submanifold at ``mu``.

    Each of the ``L`` unit covectors is integrated for ``s = floor(r / delta)``
    steps. A geodesic that meets a singular point or leaves the data support
    is dropped from the grid (``truncated="exclude"``) or keeps its valid
    prefix (``truncated="keep_prefix"``); either way the event is recorded
    in ``log``. The Hamiltonian along each geodesic is kept in
    ``hamiltonian`` (``nan`` after a failure).
    """
    if truncated not in ("exclude", "keep_prefix"):
        raise ValueError(f"unknown truncation policy {truncated!r}")
    if not (r > 0 and delta > 0):
        raise ValueError("r and delta must be positive")
    if L < 1:
        raise ValueError("L must be at least 1")
    field_ = _as_frames(cloud, k, alpha, geom, mode, frames)
    mu = np.asarray(mu, dtype=float)
    if isinstance(field_.geometry, Hypersphere):
        mu = field_.geometry.retract(mu)
    F = field_.frame(mu).F
    k = F.shape[1]
    s = int(np.floor(r / delta + 1e-9))
    dirs = unit_directions(k, L, seed)
    etas = dirs @ F.T
    batch = integrate_batch(field_, np.tile(mu, (L, 1)), etas, s * delta, delta, scheme=scheme,
                            gradient=gradient)
    pts, idx, arc, chart, log = [mu[None]], [(0, 0)], [0.0], [np.zeros((1, k))], []
    for i in range(L):
        n = int(batch.n_valid[i])
        if batch.status[i] != 0:
            log.append({"geodesic": i + 1, "status": batch.path(i).status, "valid_steps": n - 1,
                        "kept": truncated == "keep_prefix"})
            if truncated == "exclude":
                n = 1
        j = np.arange(1, n)
        pts.append(batch.positions[i, 1:n])
        idx.extend((i + 1, jj) for jj in j)
        arc.append(j * delta)
        chart.append((j * delta)[:, None] * dirs[i][None])
    alpha_val = alpha.alpha if isinstance(alpha, KernelConfig) else (np.nan if alpha is None else float(alpha))
    return PrincipalSubmanifold(
        mu=mu, r=float(r), k=k, alpha=alpha_val, L=L, delta=float(delta), frame=F, directions=dirs,
        points=np.concatenate(pts), index=np.asarray(idx, dtype=int),
        arclen=np.concatenate([np.atleast_1d(a) for a in arc]), chart=np.concatenate(chart), log=log,
        hamiltonian=batch.hamiltonian,
    )


def _nearest(queries, pts, chunk=512):
    """Index of the nearest stored point per query; ties go to the lowest index."""
    queries = np.atleast_2d(queries)
    sq = np.sum(pts**2, axis=1)
    out = np.empty(len(queries), dtype=int)
    dist = np.empty(len(queries))
    for lo in range(0, len(queries), chunk):
        q = queries[lo:lo + chunk]
        d2 = sq[None] - 2.0 * q @ pts.T + np.sum(q**2, axis=1)[:, None]
        best = d2.min(axis=1)
        for r, (row, b) in enumerate(zip(d2, best)):
            cand = np.flatnonzero(row <= b + 1e-9 * (1.0 + abs(b)))
            exact = np.linalg.norm(pts[cand] - q[r], axis=1)
            pick = np.flatnonzero(exact == exact.min())[0]
            out[lo + r] = cand[pick]
            dist[lo + r] = exact[pick]
    return out, dist


def project_discrete(x, submanifold):
    """Nearest stored point, its chart coordinates and the Euclidean distance.

    ``x`` may be a single point or a batch of shape ``(n, D)``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    idx, dist = _nearest(x, submanifold.points)
    pt, ch = submanifold.points[idx], submanifold.chart[idx]
    if single:
        return pt[0], ch[0], float(dist[0])
    return pt, ch, dist


def project_continuous(x, mu, frames, opts=None):
    """Project ``x`` to the principal submanifold at ``mu`` via exp(log(x)).

    The log is searched in the dual subbundle at ``mu``; chart coordinates
    are the frame coefficients of the optimal covector.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    F = frames.frame(mu).F
    if np.array_equal(x, mu):
        return mu.copy(), np.zeros(F.shape[1])
    opts = opts or LogOptions()
    res = sr_log(frames, mu, x, space="dual_subbundle", opts=opts)
    point = sr_exp(frames, mu, res.eta_hat, delta=opts.report_delta, scheme=opts.scheme,
                   gradient=opts.gradient)
    return point, F.T @ res.eta_hat


def frechet_base_point(cloud, metric="euclidean", kernel=None, geom=None, frames=None, log_opts=None):
    """Within-sample Fréchet mean, optionally followed by a local mean.

    ``metric`` is "euclidean", "geodesic" (the ambient geometry's distance)
    or "subriemannian" (pairwise :func:`~subflow.logmap.sr_distance`, which
    needs ``frames`` and is only practical for small clouds). Ties go to
    the lowest index. When ``kernel`` is given the local mean around the
    selected observation is returned instead of the observation itself.
    """
    x = cloud_points(cloud)
    N, D = x.shape
    geom = as_geometry(geom, D) if geom is not None else getattr(cloud, "geometry", None) or Euclidean(D)
    if metric == "euclidean":
        sq = np.sum(x**2, axis=1)
        tot = np.zeros(N)
        for lo in range(0, N, 512):
            d2 = sq[lo:lo + 512, None] - 2.0 * x[lo:lo + 512] @ x.T + sq[None]
            tot[lo:lo + 512] = np.sqrt(np.maximum(d2, 0.0)).sum(axis=1)
    elif metric == "geodesic":
        tot = np.array([geom.dist(xi, x).sum() for xi in x])
    elif metric == "subriemannian":
        if frames is None:
            raise ValueError("the sub-Riemannian metric needs a frame field")
        from .logmap import sr_distance

        tot = np.zeros(N)
        for i in range(N):
            tot[i] = sum(sr_distance(frames, x[i], x[j], opts=log_opts) for j in range(N) if j != i)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    best = int(np.flatnonzero(tot <= tot.min() * (1 + 1e-12) + 1e-300)[0])
    if kernel is None:
        return x[best].copy()
    kernel = kernel if isinstance(kernel, KernelConfig) else KernelConfig(float(kernel))
    return local_mean(x, x[best], kernel, geom)


def combine(submanifolds, x, epsilon, sigma=None):
    """Weighted average of the projections of ``x`` onto several submanifolds.

    Projections farther than ``epsilon`` from ``x`` are discarded. Arc
    lengths ``d_j`` are rescaled by the affine map ``s_j(t) = 1 - t / r_j``
    and weighted by ``exp(-(d~_j - d~_*)^2 / (2 sigma))`` around the
    submanifold closest to its base point; ``sigma`` defaults to ``max r_j``.
    """
    if not submanifolds:
        raise ValueError("at least one submanifold is required")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(x, dtype=float)
    proj, dists, radii = [], [], []
    for sm in submanifolds:
        idx, dist = _nearest(x, sm.points)
        if dist[0] < epsilon:
            proj.append(sm.points[idx[0]])
            dists.append(float(sm.arclen[idx[0]]))
            radii.append(sm.r)
    if not proj:
        raise NoSubmanifoldInRange("no projection lies within epsilon of the query point")
    proj = np.asarray(proj)
    d = np.asarray(dists)
    r = np.asarray(radii)
    sigma = max(sm.r for sm in submanifolds) if sigma is None else sigma
    scale = 1.0 - d / r
    with np.errstate(divide="ignore", invalid="ignore"):
        dt = np.where(scale > 0, d / np.where(scale > 0, scale, 1.0), np.inf)
    star = int(np.argmin(d))
    with np.errstate(invalid="ignore"):
        w = np.exp(-((dt - dt[star]) ** 2) / (2.0 * sigma))
    w = np.where(np.isfinite(w), w, 0.0)
    w[star] = 1.0
    return (w[:, None] * proj).sum(axis=0) / w.sum()
