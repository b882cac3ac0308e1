"""Command line interface: ``subflow <verb> ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(singular point, divergence, failed log search), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from ..errors import CloudFormatError, SubflowError
from ..geodesics import integrate
from ..logmap import LogOptions, sr_distance, sr_log
from ..moments import MODES, KernelConfig
from ..subbundle import PrincipalSubbundle
from ..submanifold import generate
from .datasets import gen_bumpy_sphere, gen_s_surface, gen_sphere_cloud, gen_sphere_curve_dataset
from .experiments import EXPERIMENTS, default_config, eigen_gap_report, load_config, run_experiment
from .io import load_cloud, save_cloud, write_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class _Numeric(SubflowError):
    pass


def _vector(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def _add_subbundle(p):
    p.add_argument("--cloud", required=True, help="CSV or PLY point cloud")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--cutoff", type=float, default=1e-5)
    p.add_argument("--mode", choices=MODES, default="centered_cheap")
    p.add_argument("--geometry", choices=("euclidean", "sphere"), default="euclidean")


def _frames(args):
    cloud = load_cloud(args.cloud)
    geom = None
    if args.geometry == "sphere":
        from ..ambient import Hypersphere

        geom = Hypersphere(cloud.points.shape[1] - 1)
    return PrincipalSubbundle(cloud, args.k, KernelConfig(args.alpha, cutoff=args.cutoff), geometry=geom,
                              mode=args.mode)


def _check_dim(vec, frames, name):
    if len(vec) != frames.dim:
        raise ConfigError(f"--{name} has {len(vec)} coordinates, the cloud has {frames.dim}")


def _emit(payload):
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_gen(args):
    if args.kind == "s-surface":
        cloud = gen_s_surface(args.N, args.sigma, args.d, args.seed)
    elif args.kind == "sphere":
        cloud = gen_sphere_cloud(args.N, args.k_true, args.d, args.sigma, args.seed)
    elif args.kind == "bumpy-sphere":
        cloud = gen_bumpy_sphere(args.N, sigma=args.sigma, seed=args.seed)
    else:
        cloud, _ = gen_sphere_curve_dataset(args.seed, N=args.N, sigma=args.sigma)
    save_cloud(args.out, cloud)
    _emit({"out": args.out, "points": len(cloud), "dim": int(cloud.points.shape[1])})


def cmd_frame(args):
    frames = _frames(args)
    _check_dim(args.point, frames, "point")
    fr = frames.frame(args.point)
    _emit({"F": fr.F.tolist(), "gap": fr.gap, "eigvals": frames.eigvals_at(args.point).tolist()})


def cmd_geodesic(args):
    frames = _frames(args)
    _check_dim(args.p, frames, "p")
    _check_dim(args.eta, frames, "eta")
    path = integrate(frames, args.p, args.eta, args.T, args.delta, scheme=args.scheme,
                     gradient=args.gradient, on_failure="truncate")
    rows = [(j, j * args.delta, path.hamiltonian_trace[j], *path.positions[j], *path.covectors[j])
            for j in range(len(path.positions))]
    D = frames.dim
    write_table(args.out, ["step", "t", "H"] + [f"p{c}" for c in range(D)] + [f"eta{c}" for c in range(D)],
                rows)
    _emit({"out": args.out, "status": path.status, "steps": len(rows) - 1,
           "relative_drift": path.relative_drift(), "endpoint": path.endpoint.tolist()})
    if path.status != "ok":
        raise _Numeric(f"geodesic stopped early: {path.status} after step {path.failed_step}")


def cmd_submanifold(args):
    frames = _frames(args)
    _check_dim(args.mu, frames, "mu")
    sm = generate(None, args.mu, args.k, args.alpha, args.r,
                  args.L, args.delta, scheme=args.scheme, gradient=args.gradient, seed=args.seed,
                  frames=frames)
    sm.to_csv(args.out)
    _emit({"out": args.out, "points": len(sm), "failures": sm.log})


def _log_opts(args):
    return LogOptions(seed=args.seed, scheme=args.scheme, gradient=args.gradient)


def cmd_log(args):
    frames = _frames(args)
    _check_dim(args.p, frames, "p")
    _check_dim(args.y, frames, "y")
    res = sr_log(frames, args.p, args.y, space=args.space, opts=_log_opts(args))
    _emit({"eta": res.eta_hat.tolist(), "residual": res.residual, "hamiltonian": res.hamiltonian,
           "converged": res.converged, "restarts": res.restarts_used})


def cmd_distance(args):
    frames = _frames(args)
    _check_dim(args.x, frames, "x")
    _check_dim(args.y, frames, "y")
    d = sr_distance(frames, args.x, args.y, opts=_log_opts(args), space=args.space,
                    symmetrize=args.symmetrize)
    _emit({"distance": d})


def cmd_experiment(args):
    cfg = load_config(args.config) if args.config else default_config(args.id)
    if args.config and cfg.experiment != args.id:
        raise ConfigError(f"config is for {cfg.experiment!r}, not {args.id!r}")
    cfg.seed = args.seed
    for name in ("N", "replicates", "L", "workers"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    for name in ("sigma", "alpha", "delta", "r", "T", "cutoff"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    for name in ("scheme", "gradient", "mode", "input_path"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg, name, val)
    cfg.output_dir = args.out_dir
    report = run_experiment(cfg)
    _emit({"experiment": report.experiment, "metrics": report.metrics, "wall_clock": report.wall_clock,
           "artifacts": report.artifacts})


def cmd_gap_report(args):
    cloud = load_cloud(args.cloud)
    rows = eigen_gap_report(cloud, args.k, args.alphas, n_sample=args.samples, seed=args.seed,
                            cutoff=args.cutoff, mode=args.mode)
    if args.out:
        write_table(args.out, list(rows[0]), [list(r.values()) for r in rows])
    _emit({"rows": rows})


def build_parser():
    ap = argparse.ArgumentParser(prog="subflow", description="Principal subbundles and sub-Riemannian geodesics")
    sub = ap.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen", help="generate a synthetic cloud")
    g.add_argument("kind", choices=("s-surface", "sphere", "sphere-curve", "bumpy-sphere"))
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--N", type=int, default=1000)
    g.add_argument("--sigma", type=float, default=0.0)
    g.add_argument("--d", type=int, default=3)
    g.add_argument("--k-true", dest="k_true", type=int, default=2)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("frame", help="principal frame at a point")
    _add_subbundle(f)
    f.add_argument("--point", type=_vector, required=True)
    f.set_defaults(func=cmd_frame)

    def integ(p):
        p.add_argument("--delta", type=float, default=1e-3)
        p.add_argument("--scheme", choices=("euler", "semi_implicit_euler"), default="euler")
        p.add_argument("--gradient", choices=("fd", "analytic"), default="fd")

    ge = sub.add_parser("geodesic", help="integrate one normal geodesic")
    _add_subbundle(ge)
    ge.add_argument("--p", type=_vector, required=True)
    ge.add_argument("--eta", type=_vector, required=True)
    ge.add_argument("--T", type=float, default=1.0)
    ge.add_argument("--out", required=True)
    integ(ge)
    ge.set_defaults(func=cmd_geodesic)

    sm = sub.add_parser("submanifold", help="principal submanifold at a base point")
    _add_subbundle(sm)
    sm.add_argument("--mu", type=_vector, required=True)
    sm.add_argument("--r", type=float, required=True)
    sm.add_argument("--L", type=int, required=True)
    sm.add_argument("--seed", type=int, required=True)
    sm.add_argument("--out", required=True)
    integ(sm)
    sm.set_defaults(func=cmd_submanifold)

    for verb, fn, a, b in (("log", cmd_log, "p", "y"), ("distance", cmd_distance, "x", "y")):
        lp = sub.add_parser(verb, help=f"sub-Riemannian {verb}")
        _add_subbundle(lp)
        lp.add_argument(f"--{a}", type=_vector, required=True)
        lp.add_argument(f"--{b}", type=_vector, required=True)
        lp.add_argument("--seed", type=int, required=True)
        lp.add_argument("--space", choices=("dual_subbundle", "full_cotangent"),
                        default="dual_subbundle" if verb == "log" else "full_cotangent")
        lp.add_argument("--scheme", choices=("euler", "semi_implicit_euler"), default="euler")
        lp.add_argument("--gradient", choices=("fd", "analytic"), default="fd")
        if verb == "distance":
            lp.add_argument("--symmetrize", action="store_true")
        lp.set_defaults(func=fn)

    ex = sub.add_parser("experiment", help="run a configured experiment")
    ex.add_argument("id", choices=EXPERIMENTS)
    ex.add_argument("--seed", type=int, required=True)
    ex.add_argument("--config", help="JSON ExperimentConfig")
    ex.add_argument("--out-dir", dest="out_dir", default=None)
    for name, typ in (("N", int), ("replicates", int), ("L", int), ("workers", int), ("sigma", float),
                      ("alpha", float), ("delta", float), ("r", float), ("T", float), ("cutoff", float)):
        ex.add_argument(f"--{name}", type=typ, default=None)
    ex.add_argument("--scheme", choices=("euler", "semi_implicit_euler"), default=None)
    ex.add_argument("--gradient", choices=("fd", "analytic"), default=None)
    ex.add_argument("--mode", choices=MODES, default=None)
    ex.add_argument("--input", dest="input_path", default=None)
    ex.set_defaults(func=cmd_experiment)

    gr = sub.add_parser("gap-report", help="eigengap versus kernel range")
    gr.add_argument("--cloud", required=True)
    gr.add_argument("--k", type=int, required=True)
    gr.add_argument("--alphas", type=lambda s: [float(v) for v in s.split(",")], required=True)
    gr.add_argument("--samples", type=int, default=200)
    gr.add_argument("--cutoff", type=float, default=1e-5)
    gr.add_argument("--mode", choices=MODES, default="centered_cheap")
    gr.add_argument("--seed", type=int, required=True)
    gr.add_argument("--out", default=None)
    gr.set_defaults(func=cmd_gap_report)
    return ap


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        args.func(args)
    except CloudFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SubflowError as exc:
        if isinstance(exc, ValueError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
