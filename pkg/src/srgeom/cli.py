"""Command line surface.

Every command takes a manifold (``--manifold heisenberg:2``, a
``carnot:<file>`` spec or a config file path), most take a hypersurface
(``--surface gauge-sphere`` / ``plane:x1`` / config path), and all print a
JSON report to stdout.  Point clouds and curves go to ``--out`` as CSV.
Exit codes: 0 = pass, 1 = a documented tolerance was exceeded or steering
failed, 2 = configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import connection as conn
from . import hypersurface as hs
from . import steering as steer_mod
from .config import load_hypersurface, load_manifold
from .errors import ConfigError, GeometryError
from .manifold import contact_nondegeneracy, growth_vector

PASS, FAIL, BADCONFIG = 0, 1, 2


def _emit(payload):
    sys.stdout.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _fmt(value):
    return repr(float(value))


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _parse_point(text, dim):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if len(parts) != dim:
        raise ConfigError(f"point {text!r} must have {dim} coordinates")
    return np.array([float(p) for p in parts])


def _sample_points(manifold, count, rng, margin=0.2):
    return manifold.sample_points(count, rng, margin=margin)


def _sample_surface_points(surface, count, rng, min_ratio=0.05,
                           max_tries=200):
    points = []
    tries = 0
    while len(points) < count and tries < max_tries * count:
        tries += 1
        raw = _sample_points(surface.manifold, 1, rng)[0]
        try:
            p = hs.project_to_surface(surface, raw)
        except GeometryError:
            continue
        if not surface.manifold.contains(p):
            continue
        try:
            if hs.characteristic_ratio(surface, p) < min_ratio:
                continue
        except GeometryError:
            continue
        points.append(p)
    if len(points) < count:
        raise ConfigError(
            f"could not sample {count} noncharacteristic surface points")
    return points


# ---------------------------------------------------------------------------
# Commands


def cmd_describe(args):
    man = load_manifold(args.manifold)
    rng = np.random.default_rng(args.seed)
    points = [man.center()] + list(_sample_points(man, 3, rng))
    growth = []
    chow = True
    for p in points:
        g = growth_vector(man, p)
        growth.append({"point": [float(v) for v in p],
                       "dims": list(g.dims),
                       "degree": g.degree,
                       "full": g.full})
        chow = chow and g.full
    report = {
        "name": man.name,
        "dim": man.dim,
        "rank": man.rank,
        "variables": list(man.variables),
        "domain": [list(iv) for iv in man.domain],
        "carnot": man.carnot,
        "growth": growth,
        "chow": chow,
    }
    if man.contact_form is not None:
        report["contact_nondegeneracy"] = contact_nondegeneracy(
            man, man.center())
    _emit(report)
    return PASS


def cmd_chow(args):
    man = load_manifold(args.manifold)
    rng = np.random.default_rng(args.seed)
    if args.point:
        points = [_parse_point(t, man.dim) for t in args.point]
    else:
        points = list(_sample_points(man, 5, rng))
    rows = []
    chow = True
    for p in points:
        g = growth_vector(man, p)
        chow = chow and g.full
        rows.append({"point": [float(v) for v in p], "dims": list(g.dims),
                     "degree": g.degree, "full": g.full})
    _emit({"manifold": man.name, "points": rows, "chow": chow})
    return PASS


def cmd_connection_verify(args):
    man = load_manifold(args.manifold)
    rng = np.random.default_rng(args.seed)
    tol = args.tol if args.tol is not None else 1e-7
    perturbation = 1e-3 if args.corrupt_gamma else None
    worst = {"compatibility": 0.0, "symmetry": 0.0, "leibniz": 0.0,
             "linearity": 0.0, "projection": 0.0}
    for _ in range(args.trials):
        p = _sample_points(man, 1, rng, margin=0.3)[0]
        U, V, W = (conn.random_polynomial_section(man, rng) for _ in range(3))
        rep = conn.verify_axioms(man, U, V, W, p,
                                 gamma_perturbation=perturbation)
        for key, value in rep.as_dict().items():
            worst[key] = max(worst[key], value)
        worst["projection"] = max(worst["projection"],
                                  conn.verify_projection(man, U, V, p))
    ok = all(v < tol for v in worst.values())
    _emit({"manifold": man.name, "trials": args.trials, "tolerance": tol,
           "residuals": worst, "pass": ok})
    return PASS if ok else FAIL


def cmd_char_scan(args):
    man = load_manifold(args.manifold)
    surface = load_hypersurface(args.surface, man)
    tol = args.tol if args.tol is not None else 1e-6
    clusters = hs.find_characteristic_points(surface, grid=args.grid, tol=tol)
    rows = [list(c.point) + [c.ratio, c.objective] for c in clusters]
    if args.out:
        _write_csv(args.out, list(man.variables) + ["ratio", "objective"],
                   rows)
    _emit({
        "surface": surface.name,
        "grid": args.grid,
        "tolerance": tol,
        "clusters": [{"point": [float(v) for v in c.point],
                      "ratio": c.ratio, "objective": c.objective,
                      "members": c.members} for c in clusters],
        "count": len(clusters),
    })
    return PASS


def cmd_mean_curvature(args):
    man = load_manifold(args.manifold)
    surface = load_hypersurface(args.surface, man)
    rng = np.random.default_rng(args.seed)
    tol = args.tol if args.tol is not None else 1e-7
    if args.point:
        points = [_parse_point(t, man.dim) for t in args.point]
    else:
        points = _sample_surface_points(surface, args.grid or 10, rng)
    rows = []
    worst = 0.0
    for p in points:
        report = hs.second_fundamental_form(surface, p)
        entry = [*p, report.mean_curvature]
        record = {"point": [float(v) for v in p],
                  "mean_curvature": report.mean_curvature}
        if man.carnot:
            div_form = hs.mean_curvature_divergence_form(surface, p)
            record["divergence_form"] = div_form
            record["consistency"] = abs(report.mean_curvature - div_form)
            worst = max(worst, record["consistency"])
            entry.append(div_form)
        rows.append((entry, record))
    if args.out:
        header = list(man.variables) + ["mean_curvature"]
        if man.carnot:
            header.append("divergence_form")
        _write_csv(args.out, header, [r[0] for r in rows])
    ok = worst < tol
    _emit({"surface": surface.name, "tolerance": tol,
           "max_consistency_residual": worst,
           "points": [r[1] for r in rows], "pass": ok})
    return PASS if ok else FAIL


def cmd_second_form(args):
    man = load_manifold(args.manifold)
    surface = load_hypersurface(args.surface, man)
    if not args.point:
        raise ConfigError("second-form requires --point")
    tol = args.tol if args.tol is not None else 1e-7
    reports = []
    worst = 0.0
    for text in args.point:
        p = _parse_point(text, man.dim)
        rep = hs.second_fundamental_form(surface, p)
        record = rep.as_dict()
        record["point"] = [float(v) for v in p]
        reports.append(record)
        worst = max(worst, rep.asymmetry)
    ok = worst < tol
    _emit({"surface": surface.name, "tolerance": tol, "reports": reports,
           "max_asymmetry": worst, "pass": ok})
    return PASS if ok else FAIL


def cmd_tangent_div(args):
    man = load_manifold(args.manifold)
    surface = load_hypersurface(args.surface, man)
    rng = np.random.default_rng(args.seed)
    tol = args.tol if args.tol is not None else 1e-7
    if args.point:
        points = [_parse_point(t, man.dim) for t in args.point]
    else:
        points = _sample_surface_points(surface, 5, rng)
    records = []
    worst = 0.0
    for p in points:
        Y = hs.random_tangent_section(surface, p, rng)
        div_t = hs.tangent_divergence(surface, Y, p)
        div_s = hs.surface_divergence(surface, Y, p)
        resid = abs(div_t - div_s)
        worst = max(worst, resid)
        records.append({"point": [float(v) for v in p],
                        "tangent_divergence": div_t,
                        "surface_divergence": div_s,
                        "residual": resid})
    ok = worst < tol
    _emit({"surface": surface.name, "tolerance": tol, "points": records,
           "max_residual": worst, "pass": ok})
    return PASS if ok else FAIL


def cmd_geodesic(args):
    man = load_manifold(args.manifold)
    if not args.point:
        raise ConfigError("geodesic requires --point")
    p0 = _parse_point(args.point[0], man.dim)
    if not args.velocity:
        raise ConfigError("geodesic requires --velocity")
    c0 = _parse_point(args.velocity, man.rank)
    tol = args.tol if args.tol is not None else 1e-6
    curve = conn.geodesic_integrate(man, p0, c0, args.time, args.dt)
    if args.out:
        _write_csv(args.out, ["t"] + [f"x{i+1}" for i in range(man.dim)],
                   [[t, *pt] for t, pt in zip(curve.times, curve.points)])
    drift = curve.diagnostics.max_energy_drift
    ok = drift < tol
    _emit({"manifold": man.name, "duration": args.time, "dt": args.dt,
           "samples": len(curve.times), "length": curve.length,
           "energy_drift": drift, "endpoint": [float(v) for v in curve.end],
           "pass": ok})
    return PASS if ok else FAIL


def cmd_steer(args):
    man = load_manifold(args.manifold)
    surface = load_hypersurface(args.surface, man) if args.surface else man
    if not args.source or not args.target:
        raise ConfigError("steer requires --from and --to")
    p = _parse_point(args.source, man.dim)
    q = _parse_point(args.target, man.dim)
    params = steer_mod.SteerParams(
        dt=args.dt,
        seed=args.seed,
        tol_endpoint=args.tol if args.tol is not None else 1e-3,
        horizon=args.horizon,
    )
    result = steer_mod.steer(surface, p, q, params)
    failed = isinstance(result, steer_mod.Failure)
    curve = result.curve if failed else result
    if args.out:
        _write_csv(args.out, ["t"] + [f"x{i+1}" for i in range(man.dim)],
                   [[t, *pt] for t, pt in zip(curve.times, curve.points)])
    payload = {
        "surface": getattr(surface, "name", man.name),
        "from": [float(v) for v in p],
        "to": [float(v) for v in q],
        "seed": args.seed,
        "success": not failed,
        "length": curve.length,
        "duration": float(curve.times[-1]) if len(curve.times) else 0.0,
        "diagnostics": curve.diagnostics.as_dict(),
    }
    if failed:
        payload["failure"] = result.as_dict()
    _emit(payload)
    return FAIL if failed else PASS


def cmd_h1_demo(args):
    man = load_manifold("heisenberg:1")
    plane = load_hypersurface("plane:t", man)
    params = steer_mod.SteerParams(seed=args.seed, horizon=10.0)
    ray = steer_mod.integrate_control(
        plane, [1.0, 2.0, 0.0],
        [(np.array([0.5]), 1.0), (np.array([-0.25]), 0.5)], params)
    deviation = steer_mod.h1_trap_invariant(ray)
    cross = steer_mod.steer(plane, [1.0, 1.0, 0.0], [1.0, 2.0, 0.0], params)
    crossed = not isinstance(cross, steer_mod.Failure)
    payload = {
        "ray_conservation_deviation": deviation,
        "cross_ray_success": crossed,
    }
    if not crossed:
        payload["cross_ray_failure"] = cross.as_dict()
    ok = deviation < 1e-8 and not crossed and cross.witness is not None
    payload["pass"] = ok
    _emit(payload)
    return PASS if ok else FAIL


# ---------------------------------------------------------------------------
# Argument plumbing


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="srgeom",
        description="sub-Riemannian frame geometry toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, surface=False):
        p.add_argument("--manifold", required=True,
                       help="heisenberg:n, carnot:<file>, or config path")
        if surface:
            p.add_argument("--surface",
                           help="gauge-sphere[:r], plane:<var>[=c], or config path")
        p.add_argument("--point", action="append",
                       help="comma-separated chart coordinates (repeatable)")
        p.add_argument("--grid", type=int, default=None,
                       help="seed count for scans/samples")
        p.add_argument("--tol", type=float, default=None,
                       help="override the command's documented tolerance")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--out", help="CSV output path")

    p = sub.add_parser("describe", help="dimensions, growth vector, Chow verdict")
    common(p)
    p.set_defaults(fn=cmd_describe)

    p = sub.add_parser("chow", help="growth vectors at points")
    common(p)
    p.set_defaults(fn=cmd_chow)

    p = sub.add_parser("connection-verify",
                       help="axiom residuals of the nonholonomic connection")
    common(p)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--corrupt-gamma", action="store_true",
                   help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_connection_verify)

    p = sub.add_parser("char-scan", help="characteristic point scan")
    common(p, surface=True)
    p.set_defaults(fn=cmd_char_scan)

    p = sub.add_parser("mean-curvature",
                       help="horizontal mean curvature at points")
    common(p, surface=True)
    p.set_defaults(fn=cmd_mean_curvature)

    p = sub.add_parser("second-form",
                       help="horizontal second fundamental form report")
    common(p, surface=True)
    p.set_defaults(fn=cmd_second_form)

    p = sub.add_parser("tangent-div",
                       help="tangent vs surface divergence of a random section")
    common(p, surface=True)
    p.set_defaults(fn=cmd_tangent_div)

    p = sub.add_parser("geodesic", help="nonholonomic geodesic integration")
    common(p)
    p.add_argument("--velocity", help="initial frame velocity, comma-separated")
    p.add_argument("--time", type=float, default=1.0)
    p.set_defaults(fn=cmd_geodesic)

    p = sub.add_parser("steer", help="horizontal steering between two points")
    common(p, surface=True)
    p.add_argument("--from", dest="source", help="start point")
    p.add_argument("--to", dest="target", help="target point")
    p.add_argument("--horizon", type=float, default=60.0)
    p.set_defaults(fn=cmd_steer)

    p = sub.add_parser("h1-demo",
                       help="planar trap demonstration in the 3-dim group")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_h1_demo)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "char-scan" and args.grid is None:
        args.grid = 10_000
    try:
        return args.fn(args)
    except ConfigError as exc:
        _emit({"error": str(exc), "kind": "config"})
        return BADCONFIG
    except GeometryError as exc:
        _emit({"error": str(exc), "kind": type(exc).__name__})
        return FAIL


if __name__ == "__main__":
    sys.exit(main())
