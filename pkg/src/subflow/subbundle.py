"""Principal subbundle frames and the associated cometric.

The frame at ``p`` spans the top-``k`` eigenspace of a kernel-weighted
local second moment (see :mod:`subflow.moments`). On the hypersphere the
eigenvectors live at the local mean ``m(p)`` and are parallel transported
back to ``p``.

:class:`PrincipalSubbundle` is the workhorse used by the geodesic
integrator. Besides plain frame evaluation it exposes :meth:`stencil`,
which returns the frames at ``p`` and at the finite-difference points
``p +/- h e_j``. Stencil points share the kernel support found at ``p``,
otherwise the weight cutoff would make the Hamiltonian discontinuous at the
scale of the stencil.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ambient import Euclidean, Hypersphere, as_geometry
from .errors import CutLocusError, EmptyNeighborhood, SingularPointError
from .moments import MODES, KernelConfig, cloud_points, normalize_weights

OK, SINGULAR, EMPTY, CUT_LOCUS = 0, 1, 2, 3
STATUS_NAMES = {OK: "ok", SINGULAR: "singular", EMPTY: "empty neighborhood", CUT_LOCUS: "cut locus"}


@dataclass(frozen=True)
class SubbundleFrame:
    """Orthonormal frame of the subbundle at ``base``.

    ``eigvals`` are sorted in decreasing order and ``gap`` is
    ``eigvals[k-1] - eigvals[k]``.
    """

    base: np.ndarray
    F: np.ndarray
    eigvals: np.ndarray
    gap: float
    k: int

    @property
    def cometric(self):
        return cometric(self)


@dataclass(frozen=True)
class Cometric:
    matrix: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def cometric(frame):
    """Orthogonal projector ``F F^T`` onto the subbundle."""
    F = frame.F if isinstance(frame, SubbundleFrame) else np.asarray(frame, dtype=float)
    return Cometric(F @ F.T)


def fix_signs(F):
    """Flip columns so that each one's largest-magnitude entry is positive.

    Ties between entries of equal magnitude go to the lowest index.
    Works on a single ``(D, k)`` frame or a stack ``(..., D, k)``.
    """
    F = np.asarray(F, dtype=float)
    idx = np.argmax(np.round(np.abs(F), 12), axis=-2)
    lead = np.take_along_axis(F, idx[..., None, :], axis=-2)
    return F * np.where(lead < 0, -1.0, 1.0)


def _top_k(sigma, k):
    """Eigen-decomposition sorted descending; returns (vals, vecs)."""
    vals, vecs = np.linalg.eigh(sigma)
    return vals[..., ::-1], vecs[..., ::-1]


def _gap_status(vals, k, gap_tol):
    gap = vals[..., k - 1] - vals[..., k] if vals.shape[-1] > k else vals[..., k - 1]
    lam1 = vals[..., 0]
    return gap, (gap <= gap_tol * np.maximum(lam1, 0.0)) | (lam1 <= 0.0)


@dataclass
class Stencil:
    """Frames at the centres and at ``centre +/- h e_j``.

    ``plus[b, j]`` is the ``(D, k)`` frame at ``points[b] + h[b] e_j``.
    """

    center: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    status: np.ndarray
    gap: np.ndarray = field(default=None)


class FrameField:
    """A rank-``k`` frame on the ambient space.

    Subclasses implement :meth:`frames`; the default :meth:`stencil` simply
    evaluates :meth:`frames` at every stencil point.
    """

    geometry = None
    k = None
    dim = None

    def frames(self, points):
        """Return ``(F, status, gap)`` for a ``(B, D)`` batch of points."""
        raise NotImplementedError

    def diverged(self, points):
        return np.zeros(len(points), dtype=bool)

    def stencil(self, points, h):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        B, D = points.shape
        h = np.broadcast_to(np.asarray(h, dtype=float), (B,))
        offsets = h[:, None, None] * np.eye(D)[None]
        allpts = np.concatenate(
            [points[:, None], points[:, None] + offsets, points[:, None] - offsets], axis=1
        ).reshape(-1, D)
        F, status, gap = self.frames(allpts)
        F = F.reshape(B, 2 * D + 1, D, self.k)
        status = status.reshape(B, 2 * D + 1)
        worst = np.where((status != OK).any(axis=1), np.max(status, axis=1), OK)
        worst = np.where(status[:, 0] != OK, status[:, 0], worst)
        return Stencil(F[:, 0], F[:, 1:D + 1], F[:, D + 1:], worst, gap.reshape(B, -1)[:, 0])

    def frame(self, p):
        """Frame at a single point, raising on singular points."""
        p = np.asarray(p, dtype=float)
        F, status, gap = self.frames(p[None])
        _raise_status(int(status[0]), float(gap[0]))
        vals = np.full(self.dim, np.nan)
        return SubbundleFrame(base=p, F=F[0], eigvals=vals, gap=float(gap[0]), k=self.k)


def _raise_status(status, gap=None, step=None):
    if status == SINGULAR:
        raise SingularPointError("eigenvalues k and k+1 coincide (singular point)", step=step, gap=gap)
    if status == EMPTY:
        raise EmptyNeighborhood("all kernel values underflowed")
    if status == CUT_LOCUS:
        raise CutLocusError("an observation lies in the cut locus of the query point")


class ConstantFrameField(FrameField):
    """The same frame everywhere; geodesics are straight lines."""

    def __init__(self, F, geometry=None):
        self.F = np.asarray(F, dtype=float)
        self.dim, self.k = self.F.shape
        self.geometry = geometry or Euclidean(self.dim)

    def frames(self, points):
        points = np.atleast_2d(points)
        B = len(points)
        return np.broadcast_to(self.F, (B,) + self.F.shape).copy(), np.zeros(B, int), np.ones(B)


class SphereTangentField(FrameField):
    """Exact tangent spaces of the unit sphere centred at the origin.

    The frame at ``p`` spans the orthogonal complement of ``p``; it is an
    analytic stand-in for a noiseless, infinitely dense spherical cloud.
    """

    def __init__(self, dim):
        self.dim = dim
        self.k = dim - 1
        self.geometry = Euclidean(dim)

    def frames(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        u = points / np.linalg.norm(points, axis=1, keepdims=True)
        proj = np.eye(self.dim)[None] - u[:, :, None] * u[:, None, :]
        _, vecs = np.linalg.eigh(proj)
        return vecs[:, :, 1:], np.zeros(len(points), int), np.ones(len(points))


class PrincipalSubbundle(FrameField):
    """Principal subbundle of a point cloud.

    Parameters
    ----------
    cloud : (N, D) array or PointCloud
    k : rank of the subbundle
    kernel : KernelConfig or positive float (the Gaussian range alpha)
    geometry : Euclidean (default) or Hypersphere; hypersphere clouds use
        the Riemannian construction with parallel transport from ``m(p)``.
    mode : "centered_cheap", "centered_recomputed" or "uncentered"
    gap_tol : relative eigen-gap below which a point counts as singular
    tangent_approx : on the hypersphere, run the Euclidean construction in
        the tangent space at ``p`` (no transport).
    stencil_solver : "eigh", "riccati" or "auto". The Riccati solver
        recovers the top eigenspace at stencil points by iterating from the
        centre eigenbasis, which is much cheaper than a full
        eigen-decomposition in high dimension.
    """

    def __init__(self, cloud, k, kernel, geometry=None, mode="centered_cheap", gap_tol=1e-10,
                 tangent_approx=False, stencil_solver="auto"):
        self.x = cloud_points(cloud)
        N, D = self.x.shape
        if geometry is None:
            geometry = getattr(cloud, "geometry", None)
        self.geometry = as_geometry(geometry, D) if geometry is not None else Euclidean(D)
        if self.geometry.ambient_dim != D:
            raise ValueError("geometry does not match the cloud dimension")
        if not 1 <= k <= D:
            raise ValueError("k must lie between 1 and the ambient dimension")
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.kernel = kernel if isinstance(kernel, KernelConfig) else KernelConfig(float(kernel))
        self.k = int(k)
        self.dim = D
        self.mode = mode
        self.gap_tol = gap_tol
        self.tangent_approx = tangent_approx
        if stencil_solver == "auto":
            stencil_solver = "dense" if D <= 8 else "riccati"
        if stencil_solver not in ("dense", "eigh", "riccati"):
            raise ValueError(f"unknown stencil solver {stencil_solver!r}")
        self.stencil_solver = stencil_solver
        self.sphere = isinstance(self.geometry, Hypersphere)
        self._sqx = np.sum(self.x**2, axis=1)
        self.centroid = self.x.mean(axis=0)
        self.radius = float(np.max(np.linalg.norm(self.x - self.centroid, axis=1))) or 1.0
        self.last_eigvals = None

    def diverged(self, points, factor=10.0):
        points = np.atleast_2d(points)
        return np.linalg.norm(points - self.centroid, axis=1) > factor * self.radius

    # -- public single-point API ------------------------------------------------

    def frame(self, p):
        p = np.asarray(p, dtype=float)
        if self.sphere:
            p = self.geometry.retract(p)
        res = self._center(p)
        if res["status"] != OK:
            _raise_status(res["status"], res.get("gap"))
        return SubbundleFrame(base=p, F=res["F"], eigvals=res["vals"], gap=float(res["gap"]), k=self.k)

    def frames(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        B = len(points)
        F = np.zeros((B, self.dim, self.k))
        status = np.zeros(B, dtype=int)
        gap = np.zeros(B)
        for b in range(B):
            p = self.geometry.retract(points[b]) if self.sphere else points[b]
            res = self._center(p)
            status[b] = res["status"]
            if res["status"] == OK:
                F[b], gap[b] = res["F"], res["gap"]
        return F, status, gap

    def stencil(self, points, h):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        B, D = points.shape
        h = np.broadcast_to(np.asarray(h, dtype=float), (B,))
        if not self.sphere and self.stencil_solver == "dense":
            return self._dense_stencil(points, h)
        F0 = np.zeros((B, D, self.k))
        Fp = np.zeros((B, D, D, self.k))
        Fm = np.zeros((B, D, D, self.k))
        status = np.zeros(B, dtype=int)
        gap = np.zeros(B)
        for b in range(B):
            res = self._stencil_one(points[b], h[b])
            status[b] = res["status"]
            if res["status"] == OK:
                F0[b], Fp[b], Fm[b], gap[b] = res["F"], res["plus"], res["minus"], res["gap"]
        return Stencil(F0, Fp, Fm, status, gap)

    # -- internals ----------------------------------------------------------------

    def _weights(self, sq):
        try:
            return normalize_weights(self.kernel.raw(sq), self.kernel.cutoff)
        except EmptyNeighborhood:
            return None

    def _renorm(self, sq):
        raw = self.kernel.raw(sq)
        tot = raw.sum(axis=-1, keepdims=True)
        if np.any(tot <= 0):
            return None
        return raw / tot

    def _center(self, p):
        if self.sphere:
            return self._sphere_center(p)
        return self._euclid_center(p)

    def _finish(self, sigma, out):
        vals, vecs = _top_k(sigma, self.k)
        gap, singular = _gap_status(vals, self.k, self.gap_tol)
        out.update(vals=vals, vecs=vecs, gap=float(gap))
        self.last_eigvals = vals
        if singular:
            out["status"] = SINGULAR
            return out
        out["F"] = fix_signs(vecs[:, :self.k])
        out["status"] = OK
        return out

    # Euclidean clouds

    def _euclid_center(self, p):
        x = self.x
        sq = np.maximum(self._sqx - 2.0 * (x @ p) + p @ p, 0.0)
        w = self._weights(sq)
        if w is None:
            return {"status": EMPTY}
        mask1 = w > 0
        out = {"mask1": mask1}
        if self.mode == "uncentered":
            c, ws, mask2 = p, w, mask1
        else:
            c = w @ x
            if self.mode == "centered_recomputed":
                ws = self._weights(np.maximum(self._sqx - 2.0 * (x @ c) + c @ c, 0.0))
                if ws is None:
                    return {"status": EMPTY}
                mask2 = ws > 0
            else:
                ws, mask2 = w, mask1
        out.update(c=c, mask2=mask2, w=w, ws=ws)
        y = x[mask2] - c
        sigma = (y * ws[mask2, None]).T @ y
        return self._finish(sigma, out)

    def _euclid_stencil_sigma(self, p, offsets, res, rotate=None):
        """Second-moment ingredients at ``p + offsets`` with shared supports.

        Returns ``(Z, wS, g)`` such that the moment at stencil point ``s`` is
        ``sum_m wS[s, m] (Z[m] - g[s]) (Z[m] - g[s])^T``.
        """
        x = self.x
        c0 = res["c"]
        ps = p + offsets
        x1 = x[res["mask1"]]
        w1 = self._renorm(np.sum((x1[None] - ps[:, None]) ** 2, axis=2))
        if w1 is None:
            return None
        if self.mode == "uncentered":
            g, wS, xs = ps - c0, w1, x1
        else:
            ms = w1 @ x1
            g = ms - c0
            if self.mode == "centered_recomputed":
                xs = x[res["mask2"]]
                wS = self._renorm(np.sum((xs[None] - ms[:, None]) ** 2, axis=2))
                if wS is None:
                    return None
            else:
                wS, xs = w1, x1
        Z = xs - c0
        if rotate is not None:
            Z = Z @ rotate
            g = g @ rotate
        return Z, wS, g

    def _stencil_one(self, p, h):
        if self.sphere:
            return self._sphere_stencil(p, h)
        res = self._euclid_center(p)
        if res["status"] != OK:
            return res
        D, k = self.dim, self.k
        offsets = np.concatenate([h * np.eye(D), -h * np.eye(D)])
        if self.stencil_solver == "riccati" and k < D:
            frames = self._riccati_frames(p, offsets, res)
        else:
            parts = self._euclid_stencil_sigma(p, offsets, res)
            if parts is None:
                return {"status": EMPTY}
            Z, wS, g = parts
            zbar = wS @ Z
            sig = np.einsum("sm,md,me->sde", wS, Z, Z, optimize=True)
            sig -= zbar[:, :, None] * g[:, None, :] + g[:, :, None] * zbar[:, None, :]
            sig += g[:, :, None] * g[:, None, :]
            vals, vecs = _top_k(sig, k)
            _, singular = _gap_status(vals, k, self.gap_tol)
            frames = None if np.any(singular) else vecs[..., :k]
        if frames is None:
            return {"status": SINGULAR, "gap": res["gap"]}
        res["plus"], res["minus"] = frames[:D], frames[D:]
        return res

    def _riccati_frames(self, p, offsets, res, tol=1e-15, max_iter=60):
        """Top-k eigenspaces at stencil points by a warm-started Riccati iteration.

        In the centre eigenbasis the stencil moment is ``[[A, B], [B^T, C]]``
        with ``B`` small; the invariant subspace ``span([I; X])`` solves
        ``C X - X A = X B X - B^T``. Each sweep divides by the diagonal
        eigen-gaps, so it converges geometrically while the stencil
        perturbation stays small against ``lambda_k - lambda_{k+1}``.
        """
        k = self.k
        V = res["vecs"]
        parts = self._euclid_stencil_sigma(p, offsets, res, rotate=V)
        if parts is None:
            return None
        Z, W, g = parts
        Zt, Zc = Z[:, :k], Z[:, k:]
        gt, gc = g[:, :k], g[:, k:]
        zbar = W @ Z
        zt, zc = zbar[:, :k], zbar[:, k:]
        WZt = W[:, :, None] * Zt[None]                      # (S, M, k)
        A = np.einsum("smi,mj->sij", WZt, Zt)
        A -= zt[:, :, None] * gt[:, None, :] + gt[:, :, None] * zt[:, None, :] - gt[:, :, None] * gt[:, None, :]
        B = np.einsum("smi,mj->sij", WZt, Zc)
        B -= zt[:, :, None] * gc[:, None, :] + gt[:, :, None] * zc[:, None, :] - gt[:, :, None] * gc[:, None, :]
        dC = W @ (Zc**2) - 2.0 * zc * gc + gc**2
        dA = np.einsum("sii->si", A)
        denom = dC[:, :, None] - dA[:, None, :]
        Bt = np.swapaxes(B, 1, 2)

        def c_times(X):
            ZX = Zc @ X                                      # (S, M, k)
            out = np.einsum("mc,smk->sck", Zc, W[:, :, None] * ZX)
            out -= zc[:, :, None] * np.einsum("sc,sck->sk", gc, X)[:, None, :]
            out -= gc[:, :, None] * np.einsum("sc,sck->sk", zc, X)[:, None, :]
            out += gc[:, :, None] * np.einsum("sc,sck->sk", gc, X)[:, None, :]
            return out

        X = -Bt / denom
        converged = False
        for _ in range(max_iter):
            R = X @ B @ X - Bt - (c_times(X) - dC[:, :, None] * X) + (X @ A - X * dA[:, None, :])
            Xn = R / denom
            delta = np.max(np.abs(Xn - X))
            X = Xn
            if delta <= tol * max(1.0, np.max(np.abs(X))):
                converged = True
                break
        if not converged:
            return self._stencil_eigh_fallback(p, offsets, res)
        Q = V[:, :k][None] + V[:, k:][None] @ X
        frames, _ = np.linalg.qr(Q)
        return frames

    def _stencil_eigh_fallback(self, p, offsets, res):
        parts = self._euclid_stencil_sigma(p, offsets, res)
        if parts is None:
            return None
        Z, wS, g = parts
        zbar = wS @ Z
        sig = np.einsum("sm,md,me->sde", wS, Z, Z, optimize=True)
        sig -= zbar[:, :, None] * g[:, None, :] + g[:, :, None] * zbar[:, None, :]
        sig += g[:, :, None] * g[:, None, :]
        vals, vecs = _top_k(sig, self.k)
        _, singular = _gap_status(vals, self.k, self.gap_tol)
        return None if np.any(singular) else vecs[..., :self.k]

    def _support(self, d2):
        """Cutoff mask of normalized kernel weights; rows with no mass are flagged."""
        raw = self.kernel.raw(d2)
        tot = raw.sum(axis=1, keepdims=True)
        empty = tot[:, 0] <= 0
        w = raw / np.where(tot <= 0, 1.0, tot)
        floor = np.minimum(self.kernel.cutoff, w.max(axis=1, keepdims=True))
        return (w >= floor) & (w > 0), w, empty

    def _dense_stencil(self, points, h, budget=2_000_000):
        """Batched stencil for small ambient dimension.

        Each centre's support is gathered into a padded ``(b, M, D)`` block;
        stencil weights are renormalized on that fixed support.
        """
        B, D = points.shape
        S = 2 * D + 1
        k = self.k
        x = self.x
        N = len(x)
        F0 = np.zeros((B, D, k))
        Fp = np.zeros((B, D, D, k))
        Fm = np.zeros((B, D, D, k))
        status = np.zeros(B, dtype=int)
        gap = np.zeros(B)
        eye = np.eye(D)
        recompute = self.mode == "centered_recomputed"
        sqx = np.sum(x**2, axis=1)
        chunk = max(1, budget // (S * N))
        for lo in range(0, B, chunk):
            sl = slice(lo, min(B, lo + chunk))
            p = points[sl]
            hb = h[sl]
            b = len(p)
            # expanded form is accurate enough to locate the supports
            d2 = np.maximum(sqx[None] - 2.0 * (p @ x.T) + np.sum(p**2, axis=1)[:, None], 0.0)
            mask, w, bad = self._support(d2)
            union = mask
            if recompute:
                m0 = w * mask
                m0 = (m0 / np.where(bad, 1.0, m0.sum(axis=1))[:, None]) @ x
                d2m0 = np.maximum(sqx[None] - 2.0 * (m0 @ x.T) + np.sum(m0**2, axis=1)[:, None], 0.0)
                mask2, _, bad2 = self._support(d2m0)
                bad |= bad2
                union = mask | mask2
            counts = union.sum(axis=1)
            M = max(int(counts.max()), 1)
            order = np.argsort(~union, axis=1, kind="stable")[:, :M]       # support first
            xg = x[order]                                                  # (b, M, D)
            msk = np.take_along_axis(mask, order, axis=1)
            diff = xg - p[:, None]
            d2g = np.einsum("bmd,bmd->bm", diff, diff)
            off = np.concatenate([np.zeros((1, D)), eye, -eye])[None] * hb[:, None, None]
            d2s = d2g[:, None, :] - 2.0 * (off @ np.swapaxes(diff, 1, 2))
            d2s += (hb**2)[:, None, None] * (np.arange(S) > 0)[None, :, None]
            ws = self.kernel.raw(d2s) * msk[:, None, :]
            tot_s = ws.sum(axis=2, keepdims=True)
            bad |= np.any(tot_s[..., 0] <= 0, axis=1)
            ws = ws / np.where(tot_s <= 0, 1.0, tot_s)
            ps = p[:, None, :] + off
            if self.mode == "uncentered":
                c = ps
            else:
                c = ws @ xg                                                # (b, S, D)
                if recompute:
                    msk2 = np.take_along_axis(mask2, order, axis=1)
                    dm = xg[:, None] - c[:, :, None]
                    d2m = np.einsum("bsmd,bsmd->bsm", dm, dm)
                    ws = self.kernel.raw(d2m) * msk2[:, None, :]
                    tot_s = ws.sum(axis=2, keepdims=True)
                    bad |= np.any(tot_s[..., 0] <= 0, axis=1)
                    ws = ws / np.where(tot_s <= 0, 1.0, tot_s)
            o = c[:, :1]                                                   # reference point per centre
            y = xg - o
            g = c - o
            ybar = ws @ y
            yy = (y[..., :, None] * y[..., None, :]).reshape(b, M, D * D)
            sig = (ws @ yy).reshape(b, S, D, D)
            sig -= ybar[..., :, None] * g[..., None, :] + g[..., :, None] * ybar[..., None, :]
            sig += g[..., :, None] * g[..., None, :]
            sig = 0.5 * (sig + np.swapaxes(sig, -1, -2))
            vals, vecs = _top_k(sig, k)
            gp, singular = _gap_status(vals, k, self.gap_tol)
            st = np.where(bad, EMPTY, np.where(np.any(singular, axis=1), SINGULAR, OK))
            frames = vecs[..., :k]
            F0[sl] = fix_signs(frames[:, 0])
            Fp[sl] = frames[:, 1:D + 1]
            Fm[sl] = frames[:, D + 1:]
            status[sl] = st
            gap[sl] = gp[:, 0]
            self.last_eigvals = vals[-1, 0]
        return Stencil(F0, Fp, Fm, status, gap)

    def eigvals_at(self, p):
        """All eigenvalues (descending) of the local second moment at ``p``."""
        res = self._center(np.asarray(p, dtype=float))
        if res["status"] == EMPTY:
            raise EmptyNeighborhood("all kernel values underflowed")
        return np.asarray(res["vals"])

    def analytic_dhdp(self, points, etas, budget=4_000_000):
        """Frames and the exact gradient of ``H(., eta)`` on Euclidean clouds.

        Uses first-order perturbation of the top-k eigenspace,
        ``dH = sum_{a<=k<b} <eta,v_a><eta,v_b> v_b^T dSigma v_a / (l_a - l_b)``,
        together with closed-form derivatives of the kernel weights on the
        centre's support. Cost per point is ``O(M D k)`` besides one
        eigen-decomposition, against ``O(M D^2)`` per stencil point for
        finite differences.
        """
        if self.sphere:
            raise NotImplementedError("analytic gradients are only available on Euclidean clouds")
        points = np.atleast_2d(np.asarray(points, dtype=float))
        etas = np.atleast_2d(np.asarray(etas, dtype=float))
        B, D = points.shape
        F = np.zeros((B, D, self.k))
        grad = np.zeros((B, D))
        status = np.zeros(B, dtype=int)
        gap = np.zeros(B)
        step = max(1, int(budget // max(1, self.x.shape[0] * D)))
        for s in range(0, B, step):
            sl = slice(s, s + step)
            F[sl], grad[sl], status[sl], gap[sl] = self._analytic_block(points[sl], etas[sl])
        return F, grad, status, gap

    def _row_weights(self, sq):
        """Row-wise cutoff weights; rows without mass come back as ``nan``."""
        raw = self.kernel.raw(sq)
        tot = raw.sum(axis=1, keepdims=True)
        empty = ~(tot[:, 0] > 0) | ~np.isfinite(tot[:, 0])
        w = raw / np.where(empty[:, None], 1.0, tot)
        if self.kernel.cutoff > 0:
            floor = np.minimum(self.kernel.cutoff, w.max(axis=1, keepdims=True))
            w = np.where(w >= floor, w, 0.0)
            w /= np.where(empty[:, None], 1.0, w.sum(axis=1, keepdims=True))
        w[empty] = 0.0
        return w, empty

    def _analytic_block(self, P, E):
        x, k = self.x, self.k
        B, D = P.shape
        inv_a2 = 0.0 if self.kernel.kind == "constant" else 1.0 / self.kernel.alpha**2
        w, empty = self._row_weights(np.maximum(self._sqx - 2.0 * (P @ x.T) + np.sum(P * P, axis=1)[:, None], 0.0))
        if self.mode == "uncentered":
            c, ws = P, w
        else:
            c = w @ x
            if self.mode == "centered_recomputed":
                ws, e2 = self._row_weights(np.maximum(self._sqx - 2.0 * (c @ x.T) + np.sum(c * c, axis=1)[:, None], 0.0))
                empty |= e2
            else:
                ws = w
        union = (w > 0) | (ws > 0)
        M = max(1, int(union.sum(axis=1).max()))
        idx = np.argsort(~union, axis=1, kind="stable")[:, :M]
        xg = x[idx]
        wg = np.take_along_axis(w, idx, axis=1)
        wsg = wg if ws is w else np.take_along_axis(ws, idx, axis=1)
        Y = xg - c[:, None]
        sig = np.matmul(np.swapaxes(Y * wsg[..., None], 1, 2), Y)
        sig = 0.5 * (sig + np.swapaxes(sig, 1, 2))
        vals, vecs = _top_k(sig, k)
        gp, singular = _gap_status(vals, k, self.gap_tol)
        status = np.where(empty, EMPTY, np.where(singular, SINGULAR, OK))
        ok = status == OK
        F = np.zeros((B, D, k))
        F[ok] = fix_signs(vecs[ok][..., :k])
        grad = np.zeros((B, D))
        if k == D or not np.any(ok):
            return F, grad, status, np.where(empty, 0.0, gp)
        Vt, Vc = vecs[..., :k], vecs[..., k:]
        et = np.einsum("bdk,bd->bk", Vt, E)
        ec = np.einsum("bdk,bd->bk", Vc, E)
        den = vals[:, :k, None] - vals[:, None, k:]
        coef = et[:, :, None] * ec[:, None, :] / np.where(ok[:, None, None], den, 1.0)
        U = np.matmul(Vc, np.swapaxes(coef, 1, 2))

        def quad(Z):
            return np.sum(np.matmul(Z, Vt) * np.matmul(Z, U), axis=2)

        def gsym(v):
            a = np.einsum("bdk,bk->bd", Vt, np.einsum("bdk,bd->bk", U, v))
            return 0.5 * (a + np.einsum("bdk,bk->bd", U, np.einsum("bdk,bd->bk", Vt, v)))

        def first_moment(weights, Z):
            return np.matmul(weights[:, None, :], Z)[:, 0]

        q = quad(Y)
        if self.mode == "uncentered":
            m = w @ x
            g = (first_moment(wg * q, xg) - m * np.sum(wg * q, axis=1)[:, None]) * inv_a2 - 2.0 * gsym(m - P)
        elif self.mode == "centered_cheap":
            g = first_moment(wg * q, Y) * inv_a2
        else:
            mt = ws @ x
            gm = (first_moment(wsg * q, xg) - mt * np.sum(wsg * q, axis=1)[:, None]) * inv_a2 - 2.0 * gsym(mt - c)
            g = first_moment(wg * np.einsum("bmd,bd->bm", Y, gm), Y) * inv_a2
        grad[ok] = g[ok]
        return F, grad, status, np.where(empty, 0.0, gp)

    # Hypersphere clouds

    def _sphere_logs(self, base, x):
        """Batched sphere logs; ``base`` is (S, D), ``x`` is (M, D) -> (S, M, D)."""
        c = base @ x.T
        if np.any(c <= -1.0 + 1e-9):
            return None
        u = x[None] - c[:, :, None] * base[:, None, :]
        s = np.linalg.norm(u, axis=2)
        theta = np.arctan2(s, c)
        scale = np.where(s < 1e-14, 1.0, theta / np.where(s < 1e-14, 1.0, s))
        return scale[:, :, None] * u

    def _sphere_batch(self, ps, masks=None):
        """Frames at a batch of sphere points ``ps`` (S, D).

        With ``masks`` given, weights are renormalized on those supports
        (used for stencils); otherwise the cutoff is applied and the masks
        found are returned.
        """
        geom = self.geometry
        x = self.x
        x1 = x if masks is None else x[masks[0]]
        logs = self._sphere_logs(ps, x1)
        if logs is None:
            return {"status": CUT_LOCUS}
        sq = np.sum(logs**2, axis=2)
        if masks is None:
            w = self._weights(sq)
            if w is None:
                return {"status": EMPTY}
            m1 = w[0] > 0
            w, logs, x1 = w[:, m1], logs[:, m1], x[m1]
        else:
            w = self._renorm(sq)
            if w is None:
                return {"status": EMPTY}
            m1 = masks[0]
        out = {"masks": [m1]}
        if self.tangent_approx:
            # Euclidean construction on the log vectors, evaluated at 0.
            v = logs
            if self.mode == "uncentered":
                base_vec, ws, vs = np.zeros_like(ps), w, v
            else:
                base_vec = np.einsum("sm,smd->sd", w, v)
                if self.mode == "centered_recomputed":
                    sq2 = np.sum((v - base_vec[:, None]) ** 2, axis=2)
                    ws = self._weights(sq2) if masks is None else self._renorm(sq2[:, masks[1]])
                    if ws is None:
                        return {"status": EMPTY}
                    m2 = ws[0] > 0 if masks is None else masks[1]
                    if masks is None:
                        ws = ws[:, m2]
                    vs = v[:, m2]
                    out["masks"].append(m2)
                else:
                    ws, vs = w, v
            y = vs - base_vec[:, None]
            sigma = np.einsum("sm,smd,sme->sde", ws, y, y)
            vals, vecs = _top_k(sigma, self.k)
            gap, singular = _gap_status(vals, self.k, self.gap_tol)
            F = geom.project_tangent(ps[:, None, :], np.swapaxes(vecs[..., :self.k], 1, 2))
            F = np.swapaxes(F, 1, 2)
            F, _ = np.linalg.qr(F)
            out.update(F=F, vals=vals, gap=gap, singular=singular)
            return out
        if self.mode == "uncentered":
            sigma = np.einsum("sm,smd,sme->sde", w, logs, logs)
            vals, vecs = _top_k(sigma, self.k)
            gap, singular = _gap_status(vals, self.k, self.gap_tol)
            out.update(F=vecs[..., :self.k], vals=vals, gap=gap, singular=singular)
            return out
        ms = geom.exp(ps, np.einsum("sm,smd->sd", w, logs))
        ms = geom.retract(ms)
        if self.mode == "centered_recomputed":
            x2 = x if masks is None else x[masks[1]]
            logs_m = self._sphere_logs(ms, x2)
            if logs_m is None:
                return {"status": CUT_LOCUS}
            sq2 = np.sum(logs_m**2, axis=2)
            if masks is None:
                ws = self._weights(sq2)
                if ws is None:
                    return {"status": EMPTY}
                m2 = ws[0] > 0
                ws, logs_m = ws[:, m2], logs_m[:, m2]
            else:
                ws = self._renorm(sq2)
                if ws is None:
                    return {"status": EMPTY}
                m2 = masks[1]
            out["masks"].append(m2)
        else:
            logs_m = self._sphere_logs(ms, x1)
            if logs_m is None:
                return {"status": CUT_LOCUS}
            ws = w
        # h is the identity on the extrinsic tangent representation
        sigma = np.einsum("sm,smd,sme->sde", ws, logs_m, logs_m)
        vals, vecs = _top_k(sigma, self.k)
        gap, singular = _gap_status(vals, self.k, self.gap_tol)
        E = vecs[..., :self.k]
        F = np.stack([geom.transport_frame(ms[s], ps[s], E[s]) for s in range(len(ps))])
        out.update(F=F, vals=vals, gap=gap, singular=singular, means=ms)
        return out

    def _sphere_center(self, p):
        res = self._sphere_batch(p[None])
        if "F" not in res:
            return res
        out = {"masks": res["masks"], "vals": res["vals"][0], "gap": float(res["gap"][0])}
        self.last_eigvals = out["vals"]
        if res["singular"][0]:
            out["status"] = SINGULAR
            return out
        out["F"] = fix_signs(res["F"][0])
        out["status"] = OK
        return out

    def _sphere_stencil(self, p, h):
        p = self.geometry.retract(p)
        res = self._sphere_center(p)
        if res["status"] != OK:
            return res
        D = self.dim
        # frames are extended to R^D by F(p) = F(p / |p|)
        offsets = np.concatenate([h * np.eye(D), -h * np.eye(D)])
        ps = self.geometry.retract(p + offsets)
        st = self._sphere_batch(ps, masks=res["masks"])
        if "F" not in st:
            return {"status": st["status"]}
        if np.any(st["singular"]):
            return {"status": SINGULAR, "gap": res["gap"]}
        res["plus"], res["minus"] = st["F"][:D], st["F"][D:]
        return res


def principal_frame(cloud, p, k, kernel, geom=None, mode="centered_cheap", gap_tol=1e-10,
                    tangent_approx=False):
    """Principal subbundle frame at ``p``; raises SingularPointError at singular points."""
    field_ = PrincipalSubbundle(cloud, k, kernel, geometry=geom, mode=mode, gap_tol=gap_tol,
                                tangent_approx=tangent_approx)
    return field_.frame(p)


def principal_flow_frame(cloud, p, k, kernel, geom=None, gap_tol=1e-10):
    """Frame from the uncentered second moment at ``p`` (principal-flow variant)."""
    return principal_frame(cloud, p, k, kernel, geom=geom, mode="uncentered", gap_tol=gap_tol)
