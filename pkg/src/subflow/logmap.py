"""Sub-Riemannian logarithm by geodesic shooting, and the induced distance.

``sr_log`` minimizes ``|exp_p(eta) - y|^2 + lam * H(p, eta)`` with a BFGS
quasi-Newton method. Gradients are central finite differences through the
shooting map; all ``2n + 1`` shots of one gradient are integrated together
as a batch. The small weight ``lam`` on the Hamiltonian makes the endpoint
match dominate while still selecting the shortest of several hitting
geodesics; ``lam = 1`` gives the unweighted sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ambient import Hypersphere
from .errors import NoDescentError
from .geodesics import sr_exp_batch

SPACES = ("dual_subbundle", "full_cotangent")


@dataclass(frozen=True)
class LogOptions:
    """Tuning knobs of :func:`sr_log`.

    ``delta`` is the shooting step used while optimizing and
    ``report_delta`` the finer step used for the reported residual. When
    ``refine_iters > 0`` the winning covector is re-optimized (within the
    dual subbundle) at ``report_delta`` for at most that many iterations.
    A restart still above ``abandon_ratio`` times the best objective seen
    so far after ``probe_iters`` iterations is stopped early.
    """

    delta: float = 1e-2
    report_delta: float = 1e-3
    h_weight: float = 1e-4
    n_random: int = 4
    max_iter: int = 200
    grad_tol: float = 1e-6
    fd_step: float = 1e-4
    max_full_iters: int = 10
    refine_iters: int = 5
    ftol: float = 1e-2
    probe_iters: int = 5
    abandon_ratio: float = 10.0
    seed: int = 0
    scheme: str = "euler"
    gradient: str = "fd"


@dataclass
class LogResult:
    eta_hat: np.ndarray
    residual: float
    hamiltonian: float
    converged: bool
    restarts_used: int
    objective: float = float("nan")
    endpoint: np.ndarray | None = None


@dataclass
class _Run:
    x: np.ndarray
    f: float
    converged: bool
    progressed: bool
    iterations: int
    hinv: np.ndarray | None = None


def _bfgs(fun, x0, max_iter, grad_tol, fd_step, ftol=0.0, window=3, hinv0=None, give_up=None):
    """BFGS with Armijo backtracking on a batched objective.

    ``fun`` maps an ``(m, n)`` array of parameters to ``m`` objective values
    (``inf`` where a shot failed). Accepted iterates never increase ``f``.
    Besides the gradient test, the run stops once the objective has dropped
    by less than ``ftol`` (relative) over the last ``window`` iterations,
    or when ``give_up(iteration, f)`` returns true.
    """
    n = len(x0)
    eye = np.eye(n)

    def value_and_grad(x):
        h = fd_step * max(1.0, float(np.linalg.norm(x)))
        pts = np.concatenate([x[None], x + h * eye, x - h * eye])
        vals = fun(pts)
        with np.errstate(invalid="ignore"):
            g = (vals[1:n + 1] - vals[n + 1:]) / (2.0 * h)
        return vals[0], (g if np.all(np.isfinite(g)) else None)

    x = np.asarray(x0, dtype=float).copy()
    f, g = value_and_grad(x)
    if not np.isfinite(f) or g is None:
        return _Run(x, float(f), False, False, 0)
    Hinv = eye.copy() if hinv0 is None else np.array(hinv0, dtype=float)
    scaled = hinv0 is not None
    progressed = False
    converged = False
    history = [f]
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(g) < grad_tol * (1.0 + abs(f)):
            converged = True
            break
        d = -Hinv @ g
        slope = float(g @ d)
        if slope >= 0:
            Hinv = eye.copy()
            d = -g
            slope = -float(g @ g)
        t = 1.0
        accepted = False
        while t > 1e-12:
            fn = fun((x + t * d)[None])[0]
            if np.isfinite(fn) and fn <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        xn = x + t * d
        fn, gn = value_and_grad(xn)
        if gn is None:
            x, f = xn, fn
            break
        s, yv = xn - x, gn - g
        sy = float(s @ yv)
        if sy > 1e-14:
            if not scaled:
                Hinv = eye * (sy / float(yv @ yv))
                scaled = True
            rho = 1.0 / sy
            V = eye - rho * np.outer(s, yv)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        x, f, g = xn, fn, gn
        progressed = True
        history.append(f)
        if len(history) > window and history[-1 - window] - f <= ftol * abs(f):
            break
        if f == 0.0:
            converged = True
            break
        if give_up is not None and give_up(it, f):
            break
    return _Run(x, float(f), converged, progressed, it, Hinv)


def _search_basis(frames, p, space):
    """Columns spanning the covector search space at ``p``."""
    F = frames.frame(p).F
    if space == "dual_subbundle":
        return F, F
    if isinstance(frames.geometry, Hypersphere):
        return frames.geometry.tangent_basis(p), F
    return np.eye(len(p)), F


def sr_log(frames, p, y, space="dual_subbundle", opts=None):
    """Approximate sub-Riemannian logarithm of ``y`` at ``p``.

    Multi-started from a near-zero covector, the projected chord
    ``F F^T (y - p)`` and ``opts.n_random`` random draws scaled to
    ``|y - p|``. In ``full_cotangent`` mode the restarts run in the dual
    subbundle and the winner is then polished over the whole cotangent
    space for at most ``opts.max_full_iters`` iterations.
    """
    if space not in SPACES:
        raise ValueError(f"unknown search space {space!r}")
    opts = opts or LogOptions()
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    geom = frames.geometry
    if isinstance(geom, Hypersphere):
        p = geom.retract(p)
    basis, F = _search_basis(frames, p, space)
    k = F.shape[1]
    chord = geom.log(p, y) if isinstance(geom, Hypersphere) else y - p
    scale = float(np.linalg.norm(chord))
    if scale == 0.0:
        return LogResult(np.zeros_like(p), 0.0, 0.0, True, 0, 0.0, p.copy())

    def make_fun(B, delta, offset=None):
        def fun(C):
            etas = C @ B.T if offset is None else C @ B.T + offset
            ends, batch = sr_exp_batch(frames, p, etas, delta=delta, scheme=opts.scheme,
                                       gradient=opts.gradient)
            h = 0.5 * np.sum((etas @ F) ** 2, axis=1)
            val = np.sum((ends - y) ** 2, axis=1) + opts.h_weight * h
            return np.where(batch.status == 0, val, np.inf)
        return fun

    rng = np.random.default_rng(opts.seed)
    starts = []
    u = rng.normal(size=k)
    starts.append(1e-3 * scale * u / np.linalg.norm(u))
    starts.append(F.T @ chord)
    for _ in range(opts.n_random):
        u = rng.normal(size=k)
        starts.append(scale * u / np.linalg.norm(u))

    fun_dual = make_fun(F, opts.delta)
    runs = []
    best_f = np.inf

    def give_up(it, f):
        # restarts stuck far above the best basin found so far are dropped
        return it >= opts.probe_iters and f > opts.abandon_ratio * best_f

    for c0 in starts:
        runs.append(_bfgs(fun_dual, c0, opts.max_iter, opts.grad_tol, opts.fd_step, opts.ftol, give_up=give_up))
        if np.isfinite(runs[-1].f):
            best_f = min(best_f, runs[-1].f)
    ok = [i for i, r in enumerate(runs) if np.isfinite(r.f) and (r.progressed or r.converged)]
    if not ok:
        raise NoDescentError("every restart of the log optimization failed")
    best = min(ok, key=lambda i: (runs[i].f, i))
    run = runs[best]
    eta = F @ run.x
    converged = run.converged
    hinv = run.hinv
    if space == "full_cotangent" and opts.max_full_iters > 0:
        z0 = basis.T @ eta
        polish = _bfgs(make_fun(basis, opts.delta), z0, opts.max_full_iters, opts.grad_tol, opts.fd_step,
                       opts.ftol)
        if np.isfinite(polish.f) and polish.f <= run.f:
            eta = basis @ polish.x
            converged = polish.converged or converged
            run = polish
            R = F.T @ basis
            hinv = R @ polish.hinv @ R.T
    if space == "dual_subbundle":
        eta = F @ (F.T @ eta)
    if opts.refine_iters > 0 and opts.report_delta < opts.delta:
        normal = eta - F @ (F.T @ eta)
        fine = _bfgs(make_fun(F, opts.report_delta, normal), F.T @ eta, opts.refine_iters,
                     opts.grad_tol, opts.fd_step, opts.ftol, hinv0=hinv)
        if np.isfinite(fine.f):
            eta = normal + F @ fine.x
            converged = fine.converged
            run = fine
    ends, batch = sr_exp_batch(frames, p, eta[None], delta=opts.report_delta, scheme=opts.scheme,
                               gradient=opts.gradient)
    residual = float(np.linalg.norm(ends[0] - y)) if batch.status[0] == 0 else float("inf")
    ham = 0.5 * float(np.sum((F.T @ eta) ** 2))
    return LogResult(eta, residual, ham, bool(converged), len(starts), float(run.f), ends[0])


def sr_distance(frames, x, y, opts=None, space="full_cotangent", symmetrize=False):
    """Length ``sqrt(2 H)`` of the normal geodesic found by :func:`sr_log`."""
    res = sr_log(frames, x, y, space=space, opts=opts)
    d = float(np.sqrt(2.0 * res.hamiltonian))
    if symmetrize:
        back = sr_log(frames, y, x, space=space, opts=opts)
        d = 0.5 * (d + float(np.sqrt(2.0 * back.hamiltonian)))
    return d
