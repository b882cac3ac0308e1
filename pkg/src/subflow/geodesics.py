"""Normal geodesics of the sub-Riemannian structure ``g* = F F^T``.

The Hamiltonian is ``H(p, eta) = 0.5 |F(p)^T eta|^2``. Its covector gradient
is the projection ``g* eta``; the position gradient is taken by central
finite differences of ``H(., eta)`` (or, optionally on Euclidean clouds, by
first-order eigenspace perturbation, see
:meth:`subflow.subbundle.PrincipalSubbundle.analytic_dhdp`).

Integration is vectorized over a batch of initial conditions. Failures
(singular points, leaving the data support) freeze the affected geodesic
and are reported per geodesic; the single-geodesic wrappers raise instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ambient import Hypersphere
from .errors import DivergenceError, SingularPointError
from .subbundle import OK, SINGULAR, STATUS_NAMES, _raise_status

SCHEMES = ("euler", "semi_implicit_euler")
FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class CotangentState:
    p: np.ndarray
    eta: np.ndarray


@dataclass
class GeodesicPath:
    """Discrete normal geodesic; state ``j`` sits at time ``j * step``."""

    positions: np.ndarray
    covectors: np.ndarray
    step: float
    hamiltonian_trace: np.ndarray
    status: str = "ok"
    failed_step: int | None = None
    constraint_drift: np.ndarray | None = field(default=None)

    @property
    def states(self):
        return [CotangentState(p, e) for p, e in zip(self.positions, self.covectors)]

    @property
    def endpoint(self):
        return self.positions[-1]

    @property
    def times(self):
        return self.step * np.arange(len(self.positions))

    def relative_drift(self):
        """Largest relative deviation of H from its initial value."""
        h = self.hamiltonian_trace
        if h[0] == 0:
            return float(np.max(np.abs(h - h[0])))
        return float(np.max(np.abs(h - h[0])) / h[0])


@dataclass
class GeodesicBatch:
    """Result of :func:`integrate_batch`; ``n_valid[b]`` states are usable."""

    positions: np.ndarray
    covectors: np.ndarray
    hamiltonian: np.ndarray
    step: float
    status: np.ndarray
    failed_step: np.ndarray
    constraint_drift: np.ndarray

    @property
    def n_valid(self):
        n = self.positions.shape[1]
        return np.where(self.failed_step < 0, n, self.failed_step + 1)

    def path(self, b):
        n = int(self.n_valid[b])
        st = int(self.status[b])
        return GeodesicPath(
            positions=self.positions[b, :n],
            covectors=self.covectors[b, :n],
            step=self.step,
            hamiltonian_trace=self.hamiltonian[b, :n],
            status=_status_label(st),
            failed_step=None if self.failed_step[b] < 0 else int(self.failed_step[b]),
            constraint_drift=self.constraint_drift[b, :n],
        )


DIVERGED = 10


def _status_label(st):
    return "diverged" if st == DIVERGED else STATUS_NAMES[st]


def _state_arrays(state):
    return np.asarray(state.p, dtype=float), np.asarray(state.eta, dtype=float)


def hamiltonian(frames, state):
    """``0.5 |F(p)^T eta|^2`` for a single :class:`CotangentState`."""
    p, eta = _state_arrays(state)
    F = frames.frame(p).F
    return 0.5 * float(np.sum((F.T @ eta) ** 2))


def _fd_step(p):
    return FD_REL_STEP * np.maximum(1.0, np.linalg.norm(p, axis=-1))


def _dhdp_from_stencil(st, eta, h):
    hp = 0.5 * np.sum(np.einsum("bjdk,bd->bjk", st.plus, eta) ** 2, axis=2)
    hm = 0.5 * np.sum(np.einsum("bjdk,bd->bjk", st.minus, eta) ** 2, axis=2)
    return (hp - hm) / (2.0 * h[:, None])


def _evaluate(frames, p, eta, gradient, h_fd=None):
    """Frames, dH/dp and status at a batch of states."""
    if gradient == "analytic":
        F, dhdp, status, _ = frames.analytic_dhdp(p, eta)
        return F, dhdp, status, None
    h = _fd_step(p) if h_fd is None else np.broadcast_to(np.asarray(h_fd, dtype=float), (len(p),))
    st = frames.stencil(p, h)
    return st.center, _dhdp_from_stencil(st, eta, h), st.status, (st, h)


def hamiltonian_gradients(frames, state, h_fd=None, gradient="fd"):
    """Return ``(dH/dp, dH/deta)`` at a single state.

    ``h_fd`` defaults to ``1e-5 * max(1, |p|)``.
    """
    p, eta = _state_arrays(state)
    F, dhdp, status, _ = _evaluate(frames, p[None], eta[None], gradient, h_fd)
    _raise_status(int(status[0]))
    F = F[0]
    return dhdp[0], F @ (F.T @ eta)


def _project(geom, p, eta):
    if isinstance(geom, Hypersphere):
        p = p / np.linalg.norm(p, axis=1, keepdims=True)
        eta = eta - np.sum(eta * p, axis=1, keepdims=True) * p
    return p, eta


def integrate_batch(frames, p0, eta0, T, delta, scheme="euler", gradient="fd", h_fd=None,
                    max_fixed_point=30):
    """Integrate a batch of normal geodesics for ``floor(T / delta)`` steps.

    ``p0`` and ``eta0`` have shape ``(B, D)``. Geodesics that hit a singular
    point or leave the data support are frozen; their ``failed_step`` is the
    index of the last valid state.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not (T > 0 and delta > 0):
        raise ValueError("T and delta must be positive")
    n = int(np.floor(T / delta + 1e-9))
    if n < 1:
        raise ValueError("T / delta must be at least one step")
    geom = frames.geometry
    sphere = isinstance(geom, Hypersphere)
    p = np.atleast_2d(np.asarray(p0, dtype=float)).copy()
    eta = np.atleast_2d(np.asarray(eta0, dtype=float)).copy()
    B, D = p.shape
    if eta.shape != (B, D):
        raise ValueError("p0 and eta0 must have the same shape")
    p, eta = _project(geom, p, eta)
    P = np.full((B, n + 1, D), np.nan)
    E = np.full((B, n + 1, D), np.nan)
    Hs = np.full((B, n + 1), np.nan)
    drift = np.zeros((B, n + 1))
    P[:, 0], E[:, 0] = p, eta
    status = np.zeros(B, dtype=int)
    failed = np.full(B, -1)
    # runaway covectors overflow before the finiteness check freezes them
    with np.errstate(over="ignore", invalid="ignore"):
        _integrate_loop(frames, n, delta, scheme, gradient, h_fd, max_fixed_point, geom, sphere, p, eta,
                        P, E, Hs, drift, status, failed)
    return GeodesicBatch(P, E, Hs, delta, status, failed, drift)


def _integrate_loop(frames, n, delta, scheme, gradient, h_fd, max_fixed_point, geom, sphere, p, eta,
                    P, E, Hs, drift, status, failed):
    active = np.arange(len(p))
    for j in range(n + 1):
        if active.size == 0:
            break
        pa, ea = p[active], eta[active]
        F, dhdp, st, extra = _evaluate(frames, pa, ea, gradient, h_fd)
        bad = st != OK
        Hs[active[~bad], j] = 0.5 * np.sum(np.einsum("bdk,bd->bk", F[~bad], ea[~bad]) ** 2, axis=1)
        if np.any(bad):
            failed[active[bad]] = j - 1 if j > 0 else 0
            status[active[bad]] = st[bad]
        keep = ~bad
        if j == n:
            break
        active, pa, ea, F, dhdp = active[keep], pa[keep], ea[keep], F[keep], dhdp[keep]
        if scheme == "euler":
            eta_new = ea - delta * dhdp
            vel = np.einsum("bdk,bk->bd", F, np.einsum("bdk,bd->bk", F, ea))
        else:
            eta_new = ea - delta * dhdp
            for _ in range(max_fixed_point):
                if gradient == "analytic":
                    _, g_new, _, _ = frames.analytic_dhdp(pa, eta_new)
                else:
                    stc, h = extra
                    sub = type(stc)(stc.center[keep], stc.plus[keep], stc.minus[keep], stc.status[keep])
                    g_new = _dhdp_from_stencil(sub, eta_new, h[keep])
                nxt = ea - delta * g_new
                done = np.max(np.abs(nxt - eta_new)) <= 1e-14 * (1.0 + np.max(np.abs(nxt)))
                eta_new = nxt
                if done:
                    break
            vel = np.einsum("bdk,bk->bd", F, np.einsum("bdk,bd->bk", F, eta_new))
        p_new = pa + delta * vel
        if sphere:
            drift[active, j + 1] = np.linalg.norm(p_new, axis=1) - 1.0
        p_new, eta_new = _project(geom, p_new, eta_new)
        out = frames.diverged(p_new) | ~np.all(np.isfinite(p_new), axis=1) | ~np.all(np.isfinite(eta_new), axis=1)
        if np.any(out):
            failed[active[out]] = j
            status[active[out]] = DIVERGED
        active, p_new, eta_new = active[~out], p_new[~out], eta_new[~out]
        p[active], eta[active] = p_new, eta_new
        P[active, j + 1], E[active, j + 1] = p_new, eta_new


def _raise_batch(batch, b=0):
    st = int(batch.status[b])
    if st == OK:
        return
    step = int(batch.failed_step[b])
    if st == DIVERGED:
        raise DivergenceError(f"geodesic left the data support after step {step}", step=step)
    if st == SINGULAR:
        raise SingularPointError(f"singular point reached after step {step}", step=step)
    _raise_status(st, step=step)


def integrate(frames, p0, eta0, T, delta, scheme="euler", gradient="fd", h_fd=None,
              on_failure="raise"):
    """Integrate one normal geodesic and return a :class:`GeodesicPath`.

    With ``on_failure="truncate"`` the valid prefix is returned and the
    failure recorded in ``status``; otherwise the error is raised.
    """
    batch = integrate_batch(frames, np.asarray(p0)[None], np.asarray(eta0)[None], T, delta,
                            scheme=scheme, gradient=gradient, h_fd=h_fd)
    if on_failure == "raise":
        _raise_batch(batch)
    return batch.path(0)


def sr_exp_batch(frames, p, etas, delta=1e-3, scheme="euler", gradient="fd"):
    """Time-one endpoints for several covectors; returns ``(endpoints, batch)``."""
    etas = np.atleast_2d(etas)
    p = np.broadcast_to(np.asarray(p, dtype=float), etas.shape)
    batch = integrate_batch(frames, p, etas, 1.0, delta, scheme=scheme, gradient=gradient)
    idx = batch.n_valid - 1
    return batch.positions[np.arange(len(etas)), idx], batch


def sr_exp(frames, p, eta, delta=1e-3, scheme="euler", gradient="fd"):
    """Sub-Riemannian exponential: position at time 1 of the normal geodesic."""
    batch = integrate_batch(frames, np.asarray(p)[None], np.asarray(eta)[None], 1.0, delta,
                            scheme=scheme, gradient=gradient)
    _raise_batch(batch)
    return batch.positions[0, -1]
