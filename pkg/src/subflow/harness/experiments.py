"""Experiment configurations and runners producing machine-readable reports."""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from ..ambient import Hypersphere
from ..errors import SubflowError
from ..logmap import LogOptions, sr_log
from ..moments import KernelConfig, local_mean
from ..subbundle import EMPTY, OK, SINGULAR, PrincipalSubbundle
from ..submanifold import frechet_base_point, generate, project_discrete
from .baselines import resample_polyline, sse_to_curve, tangent_pca_geodesic
from .datasets import gen_bumpy_sphere, gen_s_surface, gen_sphere_cloud, gen_sphere_curve_dataset
from .io import load_cloud, write_json, write_table

TRUE_SPHERE_DISTANCE = 0.75 * np.pi


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run; ``options`` holds extras."""

    experiment: str
    geometry: str = "euclidean"
    N: int = 2000
    sigma: float = 0.0
    d: int = 3
    k_true: int = 2
    k: int = 2
    alpha: float = 0.1
    mode: str = "centered_cheap"
    cutoff: float = 1e-5
    delta: float = 1e-3
    T: float = float(np.pi)
    r: float = 1.0
    L: int = 75
    scheme: str = "euler"
    gradient: str = "fd"
    replicates: int = 1
    seed: int = 0
    workers: int = 1
    output_dir: str | None = None
    input_path: str | None = None
    options: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    def kernel(self):
        return KernelConfig(self.alpha, cutoff=self.cutoff)


@dataclass
class RunReport:
    experiment: str
    config: dict
    metrics: dict
    wall_clock: float
    artifacts: list = field(default_factory=list)
    log: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def write(self, path):
        write_json(path, self.to_dict())


_SPHERE_GEODESICS = dict(N=2000, d=3, k_true=2, k=2, cutoff=1e-8, delta=1e-3, T=float(np.pi), L=75)

PRESETS = {
    "fig4a": dict(_SPHERE_GEODESICS, sigma=0.0, alpha=0.1),
    "fig4b": dict(_SPHERE_GEODESICS, sigma=0.1, alpha=0.3),
    "appB": dict(_SPHERE_GEODESICS, sigma=0.0, alpha=0.1),
    "sec6.1": dict(N=3000, d=3, k=2, sigma=0.01, alpha=0.1, cutoff=1e-8, delta=1e-2, r=0.3, L=64,
                   options={"radii": [0.3, 0.25], "anchors": [0, 1]}),
    "sec6.2": dict(N=3000, d=100, k=2, sigma=0.025, alpha=0.01, delta=1e-2, r=1.5, L=64,
                   gradient="analytic"),
    "sec6.3": dict(N=10000, d=50, k_true=4, k=4, sigma=0.01, alpha=0.2, cutoff=1e-8, replicates=20,
                   gradient="analytic", options={"space": "full_cotangent", "max_full_iters": 1}),
    "sec6.4": dict(geometry="sphere", N=100, d=3, k=1, sigma=5e-4, alpha=0.045, cutoff=1e-8,
                   mode="centered_recomputed", delta=1e-3, L=2, replicates=20,
                   options={"radius_factor": 1.5}),
}
EXPERIMENTS = tuple(PRESETS)


def default_config(experiment, **overrides):
    """Preset configuration for ``experiment`` with field overrides."""
    if experiment not in PRESETS:
        raise ValueError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    base = dict(PRESETS[experiment])
    base["options"] = dict(base.get("options", {}))
    opts = overrides.pop("options", None) or {}
    base.update(overrides)
    base["options"].update(opts)
    return ExperimentConfig(experiment=experiment, **base)


def _out(cfg, name):
    if cfg.output_dir is None:
        return None
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path / name


# sphere geodesics (noiseless and noisy) and the integrator comparison

def _relative_drift(H):
    """Per-geodesic largest relative deviation of H from its initial value."""
    H = np.asarray(H, dtype=float)
    dev = np.nanmax(np.abs(H - H[:, :1]), axis=1)
    return dev / H[:, 0]


def _sphere_geodesic_run(cfg, scheme):
    cloud = gen_sphere_cloud(cfg.N, cfg.k_true, cfg.d, cfg.sigma, cfg.seed)
    frames = PrincipalSubbundle(cloud, cfg.k, cfg.kernel(), mode=cfg.mode)
    mu = np.asarray(cfg.options.get("mu", [0.0, -1.0, 0.0]), dtype=float)
    target = -mu
    sm = generate(cloud, mu, cfg.k, cfg.alpha, cfg.T, cfg.L, cfg.delta, scheme=scheme,
                  gradient=cfg.gradient, seed=cfg.seed, frames=frames)
    pts = sm.points[1:]
    norms = np.linalg.norm(pts, axis=1)
    s = sm.steps
    ends = np.array([sm.points[(sm.index[:, 0] == i + 1) & (sm.index[:, 1] == s)][0]
                     for i in range(cfg.L) if np.any((sm.index[:, 0] == i + 1) & (sm.index[:, 1] == s))])
    end_dist = np.linalg.norm(ends - target, axis=1) if len(ends) else np.array([np.nan])
    drift = _relative_drift(sm.hamiltonian)
    metrics = {
        "mean_norm": float(norms.mean()),
        "sd_norm": float(norms.std()),
        "mean_endpoint_distance": float(end_dist.mean()),
        "completed_geodesics": int(len(ends)),
        "hamiltonian_drift_mean": float(np.nanmean(drift)),
        "hamiltonian_drift_max": float(np.nanmax(drift)),
    }
    return sm, metrics


def _run_sphere_geodesics(cfg):
    sm, metrics = _sphere_geodesic_run(cfg, cfg.scheme)
    artifacts = []
    path = _out(cfg, f"{cfg.experiment}_submanifold.csv")
    if path is not None:
        sm.to_csv(path)
        artifacts.append(str(path))
        hpath = _out(cfg, f"{cfg.experiment}_hamiltonian.csv")
        write_table(hpath, ["geodesic", "step", "H"],
                    [(i + 1, j, float(h)) for i, row in enumerate(sm.hamiltonian) for j, h in enumerate(row)])
        artifacts.append(str(hpath))
    return metrics, artifacts, sm.log


def _run_integrators(cfg):
    metrics, artifacts, log = {}, [], []
    for scheme in ("euler", "semi_implicit_euler"):
        sm, m = _sphere_geodesic_run(cfg, scheme)
        metrics[scheme] = m
        log.extend(dict(entry, scheme=scheme) for entry in sm.log)
    metrics["euler_drift_smaller"] = bool(metrics["euler"]["hamiltonian_drift_mean"]
                                          < metrics["semi_implicit_euler"]["hamiltonian_drift_mean"])
    path = _out(cfg, "appB_drift.csv")
    if path is not None:
        write_table(path, ["scheme", "drift_mean", "drift_max"],
                    [(s, metrics[s]["hamiltonian_drift_mean"], metrics[s]["hamiltonian_drift_max"])
                     for s in ("euler", "semi_implicit_euler")])
        artifacts.append(str(path))
    return metrics, artifacts, log


# surface reconstruction smoke test

def _run_surface(cfg):
    if cfg.input_path:
        cloud = load_cloud(cfg.input_path)
        truth = None
    else:
        cloud = gen_bumpy_sphere(cfg.N, sigma=cfg.sigma, seed=cfg.seed)
        truth = cloud
    frames = PrincipalSubbundle(cloud, cfg.k, cfg.kernel(), mode=cfg.mode)
    radii = cfg.options.get("radii", [cfg.r])
    anchors = cfg.options.get("anchors", list(range(len(radii))))
    metrics, artifacts, log = {"submanifolds": []}, [], []
    for n, (anchor, r) in enumerate(zip(anchors, radii)):
        mu = local_mean(cloud.points, cloud.points[anchor], cfg.kernel())
        sm = generate(cloud, mu, cfg.k, cfg.alpha, r, cfg.L, cfg.delta, scheme=cfg.scheme,
                      gradient=cfg.gradient, seed=cfg.seed, frames=frames)
        entry = {"anchor": int(anchor), "r": float(r), "points": len(sm), "failures": len(sm.log)}
        if truth is not None:
            u = sm.points / np.linalg.norm(sm.points, axis=1, keepdims=True)
            rad = 1.0 + truth.meta["amplitude"] * np.prod(np.sin(truth.meta["frequency"] * u), axis=1)
            err = np.abs(np.linalg.norm(sm.points, axis=1) - rad)
            entry["mean_surface_error"] = float(err.mean())
            entry["max_surface_error"] = float(err.max())
        metrics["submanifolds"].append(entry)
        log.extend(sm.log)
        path = _out(cfg, f"sec6.1_submanifold_{n}.csv")
        if path is not None:
            sm.to_csv(path)
            artifacts.append(str(path))
    return metrics, artifacts, log


# S-surface unfolding

def _run_s_surface(cfg):
    cloud = gen_s_surface(cfg.N, cfg.sigma, cfg.d, cfg.seed)
    frames = PrincipalSubbundle(cloud, cfg.k, cfg.kernel(), mode=cfg.mode)
    mu = frechet_base_point(cloud, "euclidean", kernel=cfg.kernel())
    sm = generate(cloud, mu, cfg.k, cfg.alpha, cfg.r, cfg.L, cfg.delta, scheme=cfg.scheme,
                  gradient=cfg.gradient, seed=cfg.seed, frames=frames)
    _, chart, dist = project_discrete(cloud.points, sm)
    t = cloud.truth["t"]
    rho = [float(spearmanr(chart[:, j], t).statistic) for j in range(chart.shape[1])]
    metrics = {
        "mu_first3": mu[:3].tolist(),
        "chart_dim": int(chart.shape[1]),
        "spearman_first": rho[0],
        "spearman_all": rho,
        "mean_projection_distance": float(dist.mean()),
        "points": len(sm),
    }
    artifacts = []
    path = _out(cfg, "sec6.2_chart.csv")
    if path is not None:
        write_table(path, ["obs", "t", "s"] + [f"u{j}" for j in range(chart.shape[1])],
                    [(i, t[i], cloud.truth["s"][i], *chart[i]) for i in range(len(t))])
        artifacts.append(str(path))
        spath = _out(cfg, "sec6.2_submanifold.csv")
        sm.to_csv(spath)
        artifacts.append(str(spath))
    return metrics, artifacts, sm.log


# learned distance on a noisy 4-sphere

def distance_replicate(cfg, rep):
    """One dataset of the distance study; returns ``(distance, residual, seconds)``."""
    t0 = time.perf_counter()
    cloud = gen_sphere_cloud(cfg.N, cfg.k_true, cfg.d, cfg.sigma, cfg.seed + rep)
    frames = PrincipalSubbundle(cloud, cfg.k, cfg.kernel(), mode=cfg.mode)
    p = np.zeros(cfg.d)
    p[0] = 1.0
    q = np.zeros(cfg.d)
    q[:2] = -np.sqrt(0.5)
    o = cfg.options
    opts = LogOptions(gradient=cfg.gradient, scheme=cfg.scheme, seed=cfg.seed + rep,
                      max_full_iters=int(o.get("max_full_iters", 1)),
                      refine_iters=int(o.get("refine_iters", LogOptions.refine_iters)))
    res = sr_log(frames, p, q, space=o.get("space", "full_cotangent"), opts=opts)
    return float(np.sqrt(2.0 * res.hamiltonian)), res.residual, time.perf_counter() - t0


def _run_distance(cfg):
    reps = range(cfg.replicates)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            out = list(ex.map(distance_replicate, [cfg] * cfg.replicates, reps))
    else:
        out = [distance_replicate(cfg, r) for r in reps]
    d = np.array([o[0] for o in out])
    metrics = {
        "distances": d.tolist(),
        "residuals": [o[1] for o in out],
        "seconds": [o[2] for o in out],
        "mean_distance": float(d.mean()),
        "sd_distance": float(d.std(ddof=1)) if len(d) > 1 else 0.0,
        "true_distance": float(TRUE_SPHERE_DISTANCE),
        "mean_minus_true": float(d.mean() - TRUE_SPHERE_DISTANCE),
    }
    artifacts = []
    path = _out(cfg, "sec6.3_distances.csv")
    if path is not None:
        write_table(path, ["replicate", "seed", "distance", "residual"],
                    [(i, cfg.seed + i, o[0], o[1]) for i, o in enumerate(out)])
        artifacts.append(str(path))
    return metrics, artifacts, []


# curve approximation on the 2-sphere

def _ps_curve(cloud, mu, cfg, mode, radius):
    frames = PrincipalSubbundle(cloud, 1, cfg.kernel(), geometry=cloud.geometry, mode=mode)
    sm = generate(cloud, mu, 1, cfg.alpha, radius, cfg.L, cfg.delta, scheme=cfg.scheme,
                  gradient=cfg.gradient, seed=cfg.seed, frames=frames, truncated="keep_prefix")
    branches = []
    for i in range(1, sm.L + 1):
        sel = sm.index[:, 0] == i
        branches.append((sm.directions[i - 1, 0], sm.points[sel]))
    neg = [b for s, b in branches if s < 0]
    pos = [b for s, b in branches if s > 0]
    parts = [b[::-1] for b in neg] + [sm.mu[None]] + pos
    return np.concatenate(parts), sm.log


def curve_replicate(cfg, rep):
    """SSE of the three curve fits (plus the generating curve) on one dataset."""
    cloud, curve = gen_sphere_curve_dataset(cfg.seed + rep, N=cfg.N, sigma=cfg.sigma)
    geom = cloud.geometry
    mu = frechet_base_point(cloud, "geodesic", geom=geom)
    radius = float(cfg.options.get("radius_factor", 1.5)) * float(np.max(geom.dist(mu, cloud.points)))
    out, log = {}, []
    for name, mode in (("centered", cfg.mode), ("uncentered", "uncentered")):
        try:
            pts, lg = _ps_curve(cloud, mu, cfg, mode, radius)
            out[name] = sse_to_curve(cloud, resample_polyline(pts, geom=geom), geom)
            log.extend(dict(entry, replicate=rep, fit=name) for entry in lg)
        except SubflowError as exc:
            out[name] = float("inf")
            log.append({"replicate": rep, "fit": name, "error": str(exc)})
    pg = tangent_pca_geodesic(cloud, mu, geom)
    out["principal_geodesic"] = sse_to_curve(cloud, pg.points, geom)
    out["true_curve"] = sse_to_curve(cloud, curve.discretize(), geom)
    return out, log


def _run_curves(cfg):
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            res = list(ex.map(curve_replicate, [cfg] * cfg.replicates, range(cfg.replicates)))
    else:
        res = [curve_replicate(cfg, r) for r in range(cfg.replicates)]
    names = ("centered", "uncentered", "principal_geodesic", "true_curve")
    table = {n: np.array([r[0][n] for r in res]) for n in names}
    med = {n: float(np.median(v)) for n, v in table.items()}
    metrics = {
        "sse": {n: v.tolist() for n, v in table.items()},
        "median_sse": med,
        "ordering_holds": bool(med["centered"] < med["uncentered"] < med["principal_geodesic"]),
    }
    artifacts = []
    path = _out(cfg, "sec6.4_sse.csv")
    if path is not None:
        write_table(path, ["replicate", *names],
                    [(i, *(table[n][i] for n in names)) for i in range(cfg.replicates)])
        artifacts.append(str(path))
    return metrics, artifacts, [e for r in res for e in r[1]]


RUNNERS = {
    "fig4a": _run_sphere_geodesics,
    "fig4b": _run_sphere_geodesics,
    "appB": _run_integrators,
    "sec6.1": _run_surface,
    "sec6.2": _run_s_surface,
    "sec6.3": _run_distance,
    "sec6.4": _run_curves,
}


def run_experiment(config):
    """Run one configured experiment; writes ``<id>_report.json`` when an
    output directory is set. Library errors are re-raised with the
    experiment id prepended."""
    if isinstance(config, str):
        config = default_config(config)
    if config.experiment not in RUNNERS:
        raise ValueError(f"unknown experiment {config.experiment!r}")
    t0 = time.perf_counter()
    try:
        metrics, artifacts, log = RUNNERS[config.experiment](config)
    except SubflowError as exc:
        exc.args = (f"[{config.experiment}] {exc.args[0] if exc.args else ''}",) + exc.args[1:]
        raise
    report = RunReport(config.experiment, config.to_dict(), metrics, time.perf_counter() - t0,
                       artifacts, log)
    path = _out(config, f"{config.experiment}_report.json")
    if path is not None:
        report.artifacts.append(str(path))
        report.write(path)
    return report


def eigen_gap_report(cloud, k, alpha_grid, n_sample=200, seed=0, cutoff=1e-5, mode="centered_cheap"):
    """Mean relative eigengap ``(l_k - l_{k+1}) / l_1`` at sampled observations.

    One row per ``alpha``: ``alpha, mean_gap_ratio, n_ok, n_singular, n_empty``.
    """
    pts = np.asarray(getattr(cloud, "points", cloud), dtype=float)
    geom = getattr(cloud, "geometry", None)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(pts), size=min(n_sample, len(pts)), replace=False))
    rows = []
    for a in alpha_grid:
        frames = PrincipalSubbundle(pts, k, KernelConfig(float(a), cutoff=cutoff),
                                    geometry=geom if isinstance(geom, Hypersphere) else None, mode=mode)
        ratios, counts = [], {OK: 0, SINGULAR: 0, EMPTY: 0}
        for i in idx:
            try:
                info = frames.eigvals_at(pts[i])
            except SubflowError:
                counts[EMPTY] += 1
                continue
            lam = info
            gap = lam[k - 1] - (lam[k] if len(lam) > k else 0.0)
            ratios.append(gap / lam[0] if lam[0] > 0 else 0.0)
            counts[SINGULAR if gap <= frames.gap_tol * max(lam[0], 0.0) or lam[0] <= 0 else OK] += 1
        rows.append({"alpha": float(a), "mean_gap_ratio": float(np.mean(ratios)) if ratios else float("nan"),
                     "n_ok": counts[OK], "n_singular": counts[SINGULAR], "n_empty": counts[EMPTY]})
    return rows


def load_config(path):
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))
