"""Synthetic point clouds used by the experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ambient import Euclidean, Hypersphere


@dataclass
class PointCloud:
    """Observations plus the geometry they live in and optional ground truth.

    ``truth`` holds per-point latent quantities (for example the surface
    parameter of the S-surface); ``meta`` records the generator arguments.
    """

    points: np.ndarray
    geometry: object = None
    truth: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.geometry is None:
            self.geometry = Euclidean(self.points.shape[1])

    def __len__(self):
        return len(self.points)


def _unit_sphere(rng, n, dim):
    z = rng.normal(size=(n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def gen_s_surface(N, sigma, d_embed=3, seed=0):
    """Noisy S-surface, scaled to the unit cube and zero-padded to ``d_embed``.

    The surface is ``(sin t, s, sign(t)(cos t - 1))`` with ``t`` uniform on
    ``[-3 pi / 2, 3 pi / 2]`` and ``s`` uniform on ``[0, 2]``; each coordinate
    is then affinely mapped to ``[0, 1]``. Noise is isotropic Gaussian with
    standard deviation ``sigma`` in all ``d_embed`` coordinates. ``truth``
    carries ``t``, ``s`` and the noiseless points.
    """
    if d_embed < 3:
        raise ValueError("d_embed must be at least 3")
    if N < 1 or sigma < 0:
        raise ValueError("N must be positive and sigma non-negative")
    rng = np.random.default_rng(seed)
    t = 3.0 * np.pi * (rng.random(N) - 0.5)
    s = 2.0 * rng.random(N)
    y = np.column_stack([np.sin(t), s, np.sign(t) * (np.cos(t) - 1.0)])
    # fixed analytic bounds keep the scaling independent of the sample
    lo = np.array([-1.0, 0.0, -2.0])
    hi = np.array([1.0, 2.0, 2.0])
    y = (y - lo) / (hi - lo)
    clean = np.zeros((N, d_embed))
    clean[:, :3] = y
    x = clean + sigma * rng.normal(size=(N, d_embed)) if sigma > 0 else clean.copy()
    return PointCloud(x, Euclidean(d_embed), {"t": t, "s": s, "clean": clean},
                      {"generator": "s_surface", "N": N, "sigma": sigma, "d": d_embed, "seed": seed})


def gen_sphere_cloud(N, k_true, d, sigma, seed=0):
    """Uniform points on the unit ``k_true``-sphere in the first ``k_true + 1``
    coordinates of ``R^d``, plus isotropic Gaussian noise of standard
    deviation ``sigma``."""
    if k_true + 1 > d:
        raise ValueError("the k-sphere needs k + 1 <= d")
    if N < 1 or sigma < 0:
        raise ValueError("N must be positive and sigma non-negative")
    rng = np.random.default_rng(seed)
    clean = np.zeros((N, d))
    clean[:, :k_true + 1] = _unit_sphere(rng, N, k_true + 1)
    x = clean + sigma * rng.normal(size=(N, d)) if sigma > 0 else clean.copy()
    return PointCloud(x, Euclidean(d), {"clean": clean},
                      {"generator": "sphere_cloud", "N": N, "k_true": k_true, "d": d, "sigma": sigma,
                       "seed": seed})


def gen_bumpy_sphere(N, amplitude=0.1, frequency=3, sigma=0.0, seed=0):
    """Star-shaped surface ``r(u) = 1 + a sin(f u_x) sin(f u_y) sin(f u_z)`` in R^3."""
    rng = np.random.default_rng(seed)
    u = _unit_sphere(rng, N, 3)
    r = 1.0 + amplitude * np.prod(np.sin(frequency * u), axis=1)
    clean = u * r[:, None]
    x = clean + sigma * rng.normal(size=(N, 3)) if sigma > 0 else clean.copy()
    return PointCloud(x, Euclidean(3), {"clean": clean, "direction": u},
                      {"generator": "bumpy_sphere", "N": N, "amplitude": amplitude,
                       "frequency": frequency, "sigma": sigma, "seed": seed})


NORTH_POLE = np.array([0.0, 0.0, 1.0])


@dataclass
class QuarticCurve:
    """``t -> exp_{p0}((t, f(t)))`` with ``f(t) = prod_j (t - a_j)``."""

    roots: np.ndarray
    base: np.ndarray = field(default_factory=lambda: NORTH_POLE.copy())

    def f(self, t):
        t = np.asarray(t, dtype=float)
        return np.prod(t[..., None] - self.roots, axis=-1)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        sphere = Hypersphere(2)
        e1, e2 = sphere.tangent_basis(self.base).T
        v = t[:, None] * e1 + self.f(t)[:, None] * e2
        return sphere.exp(self.base, v)

    def discretize(self, n=2000, t_range=(-1.0, 1.0)):
        return self(np.linspace(t_range[0], t_range[1], n))


def gen_sphere_curve_dataset(seed=0, N=100, sigma=5e-4):
    """Noisy observations around a random quartic curve on the unit 2-sphere.

    Roots ``a1, a2 ~ U(-1, 0)`` and ``a3, a4 ~ U(0, 1)``; curve points
    ``z_i = exp_{p0}((t_i, f(t_i)))`` at ``N`` evenly spaced ``t_i`` in
    ``[-1, 1]``; observations ``x_i = exp_{z_i}(v_i)`` with ``v_i`` isotropic
    Gaussian in an orthonormal tangent basis with per-axis variance
    ``sigma``. Returns ``(PointCloud, QuarticCurve)``.
    """
    rng = np.random.default_rng(seed)
    roots = np.concatenate([rng.uniform(-1.0, 0.0, 2), rng.uniform(0.0, 1.0, 2)])
    curve = QuarticCurve(roots)
    t = np.linspace(-1.0, 1.0, N)
    z = curve(t)
    sphere = Hypersphere(2)
    coef = np.sqrt(sigma) * rng.normal(size=(N, 2))
    x = np.empty_like(z)
    for i in range(N):
        x[i] = sphere.exp(z[i], sphere.tangent_basis(z[i]) @ coef[i])
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return (PointCloud(x, sphere, {"t": t, "clean": z},
                       {"generator": "sphere_curve", "N": N, "sigma": sigma, "seed": seed,
                        "roots": roots.tolist()}),
            curve)
